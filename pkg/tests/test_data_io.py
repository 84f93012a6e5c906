"""Dataset containers, standardization, and the JSONL wire format."""

import numpy as np
import pytest

from detchoice import Assortment, DataError, Dataset, Observation, PriorSpec, Standardization
from detchoice.dataio import (
    parse_dataset,
    params_from_dict,
    params_to_dict,
    read_dataset,
    serialize_dataset,
    write_dataset,
)
from detchoice.kernel import ModelParams


def _sample_dataset(gen, n_obs=5):
    obs = []
    for k in range(n_obs):
        n = int(gen.integers(1, 6))
        X = gen.normal(size=(n, 3))
        chosen = tuple(sorted(gen.choice(n, size=int(gen.integers(0, n + 1)), replace=False).tolist()))
        obs.append(Observation(id=f"obs-{k}", assortment=Assortment(X), chosen=chosen))
    return Dataset(
        observations=obs,
        feature_names=("u", "v", "w"),
        similarity_mask=(0, 2),
        quality_mask=(0, 1),
        lengthscale_groups=(0, 0),
        standardize_features=(1,),
    )


class TestObservation:
    def test_labels_vector(self):
        obs = Observation(id="o", assortment=Assortment(np.zeros((4, 1))), chosen=(1, 3))
        assert obs.labels.tolist() == [False, True, False, True]

    def test_chosen_must_be_sorted_unique(self):
        with pytest.raises(ValueError):
            Observation(id="o", assortment=Assortment(np.zeros((3, 1))), chosen=(2, 1))
        with pytest.raises(ValueError):
            Observation(id="o", assortment=Assortment(np.zeros((3, 1))), chosen=(0, 3))


class TestStandardization:
    def test_fit_and_apply(self):
        gen = np.random.default_rng(0)
        data = _sample_dataset(gen, n_obs=8)
        std = Standardization.fit(data)
        out = std.apply(data)
        X = np.concatenate([o.assortment.features for o in out.observations])
        assert abs(X[:, 1].mean()) < 1e-10
        assert X[:, 1].std() == pytest.approx(1.0, abs=1e-10)
        # non-selected dimensions untouched
        raw = np.concatenate([o.assortment.features for o in data.observations])
        np.testing.assert_array_equal(X[:, 0], raw[:, 0])
        assert out.standardization is std

    def test_constant_column_is_left_alone(self):
        X = np.ones((3, 1))
        data = Dataset(
            observations=[Observation(id="o", assortment=Assortment(X), chosen=())],
            feature_names=("c",),
            similarity_mask=(),
            standardize_features=(0,),
        )
        std = Standardization.fit(data)
        assert std.mean[0] == 0.0 and std.sd[0] == 1.0


class TestJsonlRoundTrip:
    def test_exact_round_trip(self):
        gen = np.random.default_rng(1)
        data = _sample_dataset(gen)
        text = serialize_dataset(data)
        back = parse_dataset(text)
        assert back.feature_names == data.feature_names
        assert back.similarity_mask == data.similarity_mask
        assert back.quality_mask == data.quality_mask
        assert back.lengthscale_groups == data.lengthscale_groups
        assert back.standardize_features == data.standardize_features
        for a, b in zip(data.observations, back.observations):
            assert a.id == b.id and a.chosen == b.chosen
            assert a.assortment.ids == b.assortment.ids
            np.testing.assert_array_equal(a.assortment.features, b.assortment.features)

    def test_serialization_is_byte_stable(self):
        gen = np.random.default_rng(2)
        data = _sample_dataset(gen)
        assert serialize_dataset(data) == serialize_dataset(parse_dataset(serialize_dataset(data)))

    def test_file_round_trip(self, tmp_path):
        gen = np.random.default_rng(3)
        data = _sample_dataset(gen)
        path = tmp_path / "d.jsonl"
        write_dataset(data, path)
        back = read_dataset(path)
        assert len(back) == len(data)

    def test_header_with_standardization_round_trips(self):
        gen = np.random.default_rng(4)
        data = _sample_dataset(gen)
        std = Standardization.fit(data)
        out = std.apply(data)
        back = parse_dataset(serialize_dataset(out))
        np.testing.assert_array_equal(back.standardization.mean, std.mean)
        np.testing.assert_array_equal(back.standardization.sd, std.sd)

    def test_parse_error_reports_line_number(self):
        gen = np.random.default_rng(5)
        text = serialize_dataset(_sample_dataset(gen, n_obs=3))
        lines = text.splitlines()
        lines[2] = "{broken json"
        with pytest.raises(DataError, match="line 3"):
            parse_dataset("\n".join(lines))

    def test_empty_file_rejected(self):
        with pytest.raises(DataError):
            parse_dataset("")

    def test_feature_count_mismatch_rejected(self):
        gen = np.random.default_rng(6)
        text = serialize_dataset(_sample_dataset(gen, n_obs=1))
        lines = text.splitlines()
        lines[1] = lines[1].replace('"x": [', '"x": [9.0, ', 1)
        with pytest.raises(DataError, match="line 2"):
            parse_dataset("\n".join(lines))


class TestParamsSerialization:
    def test_round_trip(self):
        params = ModelParams(
            beta=np.array([0.5, -1.0]),
            log_lengthscales=np.array([0.25]),
            similarity_mask=(2, 3),
            quality_mask=(0, 1),
            lengthscale_groups=(0, 0),
        )
        back = params_from_dict(params_to_dict(params))
        np.testing.assert_array_equal(back.beta, params.beta)
        np.testing.assert_array_equal(back.log_lengthscales, params.log_lengthscales)
        assert back.similarity_mask == params.similarity_mask
        assert back.quality_mask == params.quality_mask
        assert back.lengthscale_groups == params.lengthscale_groups


class TestPriorSpec:
    def test_log_density_is_normalized_gaussian(self):
        priors = PriorSpec.default(2, 1, beta_sd=2.0, loglen_sd=1.0)
        got = priors.log_density(np.zeros(2), np.zeros(1))
        expected = -0.5 * 3 * np.log(2 * np.pi) - 2 * np.log(2.0)
        assert got == pytest.approx(expected)

    def test_gradient_matches_finite_differences(self):
        priors = PriorSpec.default(2, 1, beta_sd=1.5, loglen_sd=0.7)
        beta, logl = np.array([0.4, -0.2]), np.array([0.3])
        gb, gl = priors.grad_log_density(beta, logl)
        h = 1e-6
        fd0 = (priors.log_density(beta + [h, 0], logl) - priors.log_density(beta - [h, 0], logl)) / (2 * h)
        assert gb[0] == pytest.approx(fd0, rel=1e-6)
        fdl = (priors.log_density(beta, logl + h) - priors.log_density(beta, logl - h)) / (2 * h)
        assert gl[0] == pytest.approx(fdl, rel=1e-6)

    def test_positive_sd_required(self):
        with pytest.raises(ValueError):
            PriorSpec(beta_mean=np.zeros(1), beta_sd=np.zeros(1), loglen_mean=np.zeros(0), loglen_sd=np.ones(0))
