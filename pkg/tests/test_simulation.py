"""Data generators: the spatial thinning process and the transmission process."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from detchoice import (
    LoraGenConfig,
    RngState,
    SpatialConfig,
    Transmission,
    gen_lora_assortment,
    gen_lora_dataset,
    gen_spatial_dataset,
    gen_spatial_observation,
    lora_features,
    matern_iii_thin,
    radius_sweep,
    synthetic_capture_labels,
)
from detchoice.exceptions import DataError


class TestMaternThinning:
    def test_three_point_chain(self):
        pts = np.array([[0.0, 1.0], [0.0, 0.5], [0.0, -1.0]])
        out = matern_iii_thin(pts, np.ones(3, dtype=bool), 0.3)
        assert out.tolist() == [True, False, True]

    def test_zero_radius_is_identity(self):
        gen = np.random.default_rng(0)
        pts = gen.uniform(-2, 2, size=(10, 2))
        surv = gen.random(10) < 0.5
        np.testing.assert_array_equal(matern_iii_thin(pts, surv, 0.0), surv)

    def test_dead_points_do_not_exclude(self):
        # a 0-labeled point must not knock out its neighbors
        pts = np.array([[0.0, 1.0], [0.0, 0.9]])
        out = matern_iii_thin(pts, np.array([False, True]), 0.5)
        assert out.tolist() == [False, True]

    @given(seed=st.integers(0, 5000), radius=st.floats(0.05, 1.5))
    @settings(max_examples=60, deadline=None)
    def test_retained_set_is_separated_and_maximal(self, seed, radius):
        """Output is 2r-separated and maximal in decreasing-y order."""
        gen = np.random.default_rng(seed)
        n = int(gen.integers(2, 12))
        pts = gen.uniform(-2, 2, size=(n, 2))
        surv = gen.random(n) < 0.8
        out = matern_iii_thin(pts, surv, radius)
        kept = np.nonzero(out)[0]
        # separation
        for a in kept:
            for b in kept:
                if a < b:
                    assert np.linalg.norm(pts[a] - pts[b]) >= 2 * radius
        # no retained label outside the original survivors
        assert not np.any(out & ~surv)
        # maximality: every dropped survivor is within 2r of a kept point
        for i in np.nonzero(surv & ~out)[0]:
            dists = [np.linalg.norm(pts[i] - pts[j]) for j in kept]
            assert dists and min(dists) < 2 * radius


class TestSpatialGenerator:
    def test_high_base_rate_and_zero_radius_keep_everything(self):
        cfg = SpatialConfig(gamma0=50.0, radius=0.0)
        obs = gen_spatial_observation(cfg, RngState(1).generator())
        assert obs.chosen == tuple(range(cfg.n_items))

    def test_huge_radius_keeps_at_most_one(self):
        cfg = SpatialConfig(radius=4.0)
        for seed in range(20):
            obs = gen_spatial_observation(cfg, RngState(seed).generator())
            assert len(obs.chosen) <= 1

    def test_selected_items_always_separated(self):
        cfg = SpatialConfig(radius=0.6)
        data = gen_spatial_dataset(cfg, 100, RngState(2))
        for obs in data.observations:
            pts = obs.assortment.features[:, 1:3]
            for a in obs.chosen:
                for b in obs.chosen:
                    if a < b:
                        assert np.linalg.norm(pts[a] - pts[b]) >= 2 * cfg.radius

    def test_mean_selection_size_decreases_with_radius(self):
        means, ses = [], []
        for r in (0.0, 0.5, 4.0):
            data = gen_spatial_dataset(SpatialConfig(radius=r), 1000, RngState(3))
            sizes = np.array([len(o.chosen) for o in data.observations], dtype=float)
            means.append(sizes.mean())
            ses.append(sizes.std(ddof=1) / np.sqrt(len(sizes)))
        assert means[0] - 3 * (ses[0] + ses[1]) > means[1]
        assert means[1] - 3 * (ses[1] + ses[2]) > means[2]

    def test_feature_layout(self):
        cfg = SpatialConfig()
        data = gen_spatial_dataset(cfg, 3, RngState(4))
        assert data.feature_names == ("const", "x", "y", "dist")
        assert data.similarity_mask == (1, 2)
        X = data.observations[0].assortment.features
        np.testing.assert_array_equal(X[:, 0], 1.0)
        np.testing.assert_allclose(X[:, 3], np.hypot(X[:, 1], X[:, 2]), rtol=1e-12)

    def test_bit_reproducible(self):
        a = gen_spatial_dataset(SpatialConfig(), 20, RngState(5))
        b = gen_spatial_dataset(SpatialConfig(), 20, RngState(5))
        for oa, ob in zip(a.observations, b.observations):
            np.testing.assert_array_equal(oa.assortment.features, ob.assortment.features)
            assert oa.chosen == ob.chosen


class TestRadiusSweep:
    def test_labels_independent_at_zero_radius(self):
        """Pairwise label independence is not rejected when there is no thinning."""
        from scipy.stats import chi2_contingency

        _, _, evald = radius_sweep([0.0], 1, 5000, SpatialConfig(), RngState(6))[0]
        labels = np.array([o.labels for o in evald.observations])
        table = np.zeros((2, 2))
        a, b = labels[:, 0], labels[:, 1]
        for i in (0, 1):
            for j in (0, 1):
                table[i, j] = np.sum((a == i) & (b == j))
        result = chi2_contingency(table)
        assert result.pvalue > 0.001

    def test_deterministic_and_disjoint_streams(self):
        one = radius_sweep([0.2, 0.8], 10, 5, SpatialConfig(), RngState(7))
        two = radius_sweep([0.2, 0.8], 10, 5, SpatialConfig(), RngState(7))
        for (r1, tr1, ev1), (r2, tr2, ev2) in zip(one, two):
            assert r1 == r2
            for x, y in zip(tr1.observations + ev1.observations, tr2.observations + ev2.observations):
                np.testing.assert_array_equal(x.assortment.features, y.assortment.features)
        # train and eval differ
        tr, ev = one[0][1], one[0][2]
        assert not np.array_equal(
            tr.observations[0].assortment.features, ev.observations[0].assortment.features
        )


class TestLoraGenerator:
    def test_single_device(self):
        cfg = LoraGenConfig(n_devices=1)
        txs = gen_lora_assortment(cfg, RngState(8).generator())
        assert len(txs) == 1

    def test_forced_collision_config(self):
        cfg = LoraGenConfig(n_devices=4, d_max=0.0, channel_subset=(9,), sf_subset=(8,))
        txs = gen_lora_assortment(cfg, RngState(9).generator())
        assert all(t.delay == 0.0 and t.channel == 9 and t.sf == 8 for t in txs)
        X_q, _ = lora_features(txs, cfg)
        np.testing.assert_array_equal(X_q[:, 1], 1.0)
        np.testing.assert_array_equal(X_q[:, 2], 1.0)

    def test_power_distribution_mean(self):
        cfg = LoraGenConfig(n_devices=9)
        gen = RngState(10).generator()
        powers = []
        while len(powers) < 100_000:
            powers.extend(t.power for t in gen_lora_assortment(cfg, gen))
        mean = np.mean(powers[:100_000])
        assert abs(mean - 9.5) <= 0.1

    def test_delay_bounds_and_integrality(self):
        cfg = LoraGenConfig(n_devices=9, d_max=600)
        gen = RngState(11).generator()
        for _ in range(50):
            for t in gen_lora_assortment(cfg, gen):
                assert 0 <= t.delay <= 600 and t.delay == int(t.delay)
                assert -4 <= t.power <= 23

    def test_bit_reproducible(self):
        cfg = LoraGenConfig()
        a = gen_lora_dataset(cfg, 10, RngState(12))
        b = gen_lora_dataset(cfg, 10, RngState(12))
        for oa, ob in zip(a.observations, b.observations):
            np.testing.assert_array_equal(oa.assortment.features, ob.assortment.features)
            assert oa.chosen == ob.chosen


class TestLoraFeatures:
    def _tx(self, device=0, channel=9, sf=8, power=10, delay=0.0, airtime=113.0):
        return Transmission(device, channel, sf, power, delay, airtime)

    def test_disjoint_same_channel_not_concurrent(self):
        a = self._tx(0, delay=0.0)
        b = self._tx(1, delay=500.0)
        X_q, _ = lora_features([a, b], LoraGenConfig())
        np.testing.assert_array_equal(X_q[:, 1], 0.0)

    def test_same_channel_different_sf_overlap(self):
        a = self._tx(0, sf=8, delay=0.0)
        b = self._tx(1, sf=9, delay=0.0, airtime=206.0)
        X_q, _ = lora_features([a, b], LoraGenConfig())
        np.testing.assert_array_equal(X_q[:, 1], 1.0)
        np.testing.assert_array_equal(X_q[:, 2], 0.0)

    def test_relative_delay_unit(self):
        cfg = LoraGenConfig()
        a = self._tx(0, delay=0.0)
        b = self._tx(1, delay=113.0)  # exactly one airtime later
        _, X_s = lora_features([a, b], cfg)
        col = 8  # first relative-delay column (sf 8)
        assert X_s[1, col] - X_s[0, col] == pytest.approx(1.0)
        assert X_s[0, col] == pytest.approx(cfg.relative_delay_offset)

    def test_overlap_implication_on_generated_data(self):
        cfg = LoraGenConfig(n_devices=9, d_max=300, channel_subset=(9, 10), sf_subset=(8, 9))
        data = gen_lora_dataset(cfg, 200, RngState(13))
        for obs in data.observations:
            X = obs.assortment.features
            assert np.all(X[:, 2] <= X[:, 1])

    def test_boundary_touch_counts_as_concurrent(self):
        a = self._tx(0, delay=0.0, airtime=113.0)
        b = self._tx(1, delay=113.0)
        assert a.overlaps(b)

    def test_unknown_sf_rejected(self):
        with pytest.raises(DataError):
            self._tx(sf=5)


class TestCaptureLabels:
    def _tx(self, device, delay, power=10, channel=9, sf=8, airtime=113.0):
        return Transmission(device, channel, sf, power, delay, airtime)

    def test_all_disjoint_all_received(self):
        txs = [self._tx(0, 0.0), self._tx(1, 200.0), self._tx(2, 400.0)]
        assert synthetic_capture_labels(txs) == (0, 1, 2)

    def test_first_wins_in_full_overlap(self):
        txs = [self._tx(0, 0.0), self._tx(1, 10.0)]
        assert synthetic_capture_labels(txs) == (0,)

    def test_chain_releases_after_first(self):
        txs = [self._tx(0, 0.0), self._tx(1, 100.0), self._tx(2, 150.0)]
        assert synthetic_capture_labels(txs) == (0, 2)

    def test_tie_broken_by_power(self):
        txs = [self._tx(0, 0.0, power=5), self._tx(1, 0.0, power=20)]
        assert synthetic_capture_labels(txs) == (1,)

    def test_different_groups_do_not_interact(self):
        txs = [self._tx(0, 0.0, channel=9), self._tx(1, 0.0, channel=10)]
        assert synthetic_capture_labels(txs) == (0, 1)

    def test_unknown_rule_rejected(self):
        with pytest.raises(ValueError):
            synthetic_capture_labels([self._tx(0, 0.0)], rule="nope")
