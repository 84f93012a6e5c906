"""Kernel construction: qualities, similarities, and their invariants."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from detchoice import (
    Assortment,
    ModelParams,
    SimilarityMode,
    build_kernel,
    psd_check,
    quality,
    rbf_similarity,
    rbf_similarity_matrix,
)


class TestQuality:
    def test_zero_coefficients(self):
        assert quality([0.0, 0.0], [1.0, 2.0]) == pytest.approx(1.0)

    def test_half_exponent(self):
        assert quality([2.0, 0.0], [1.0, 5.0]) == pytest.approx(np.e)

    def test_log_four(self):
        assert quality([1.0], [np.log(4.0)]) == pytest.approx(2.0)

    def test_square_is_plain_exponential(self):
        gen = np.random.default_rng(0)
        for _ in range(50):
            beta = gen.normal(size=4)
            x = gen.normal(size=4)
            assert quality(beta, x) ** 2 == pytest.approx(np.exp(beta @ x), rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            quality([1.0, 2.0], [1.0])

    def test_invariant_to_unused_features(self):
        # features outside beta's support cannot change the quality
        beta = np.array([1.5, 0.0, -0.5])
        x = np.array([0.3, 7.0, 1.1])
        x2 = x.copy()
        x2[1] = -123.0
        assert quality(beta, x) == pytest.approx(quality(beta, x2), rel=1e-15)


class TestRbfSimilarity:
    def test_identical_points(self):
        assert rbf_similarity([0.7, 3.0], [1.0, 2.0], [1.0, 2.0]) == 1.0

    def test_unit_distance(self):
        assert rbf_similarity([1.0], [0.0], [1.0]) == pytest.approx(np.exp(-0.5))

    def test_two_dimensional(self):
        got = rbf_similarity([1.0, 2.0], [0.0, 0.0], [1.0, 2.0])
        assert got == pytest.approx(np.exp(-1.0))

    def test_symmetry(self):
        gen = np.random.default_rng(1)
        for _ in range(25):
            ell = np.exp(gen.normal(size=3))
            a, b = gen.normal(size=3), gen.normal(size=3)
            assert rbf_similarity(ell, a, b) == pytest.approx(rbf_similarity(ell, b, a), rel=1e-15)

    def test_nonpositive_lengthscale_rejected(self):
        with pytest.raises(ValueError):
            rbf_similarity([0.0], [1.0], [2.0])

    def test_matrix_psd_and_bounded(self):
        gen = np.random.default_rng(2)
        for _ in range(20):
            n = int(gen.integers(2, 9))
            X = gen.normal(size=(n, 2))
            S = rbf_similarity_matrix(np.exp(gen.normal(size=2)), X)
            assert np.all(np.diag(S) == 1.0)
            assert S.min() >= 0.0 and S.max() <= 1.0
            assert psd_check(S, tol=1e-8)

    @given(
        scale=st.floats(min_value=0.1, max_value=10.0),
        seed=st.integers(min_value=0, max_value=10_000),
    )
    @settings(max_examples=40, deadline=None)
    def test_joint_rescaling_leaves_similarity_unchanged(self, scale, seed):
        """Scaling a feature and its lengthscale by the same factor is a no-op."""
        gen = np.random.default_rng(seed)
        X = gen.normal(size=(5, 2))
        ell = np.exp(gen.normal(size=2))
        S = rbf_similarity_matrix(ell, X)
        X2 = X.copy()
        X2[:, 0] *= scale
        ell2 = ell.copy()
        ell2[0] *= scale
        S2 = rbf_similarity_matrix(ell2, X2)
        np.testing.assert_allclose(S2, S, atol=1e-12)

    def test_invariant_to_unmasked_features(self):
        gen = np.random.default_rng(3)
        X = gen.normal(size=(6, 3))
        params = ModelParams(
            beta=np.zeros(3), log_lengthscales=np.zeros(2), similarity_mask=(0, 2)
        )
        b1 = build_kernel(params, Assortment(X))
        X2 = X.copy()
        X2[:, 1] += 55.0
        b2 = build_kernel(params, Assortment(X2))
        np.testing.assert_allclose(b1.S, b2.S, atol=0)


class TestBuildKernel:
    def test_two_item_determinant(self):
        # unit qualities leave det(L) = 1 - s^2, s the off-diagonal similarity
        X = np.array([[0.0], [1.3]])
        params = ModelParams(beta=np.zeros(1), log_lengthscales=np.zeros(1), similarity_mask=(0,))
        bundle = build_kernel(params, Assortment(X))
        s = rbf_similarity([1.0], X[0], X[1])
        np.testing.assert_allclose(bundle.L, [[1.0, s], [s, 1.0]], atol=1e-15)
        assert np.linalg.det(bundle.L) == pytest.approx(1 - s**2)

    def test_identity_mode_is_diagonal(self):
        gen = np.random.default_rng(4)
        X = gen.normal(size=(5, 2))
        beta = gen.normal(size=2)
        params = ModelParams(beta=beta, log_lengthscales=np.zeros(2), similarity_mask=(0, 1))
        bundle = build_kernel(params, Assortment(X), SimilarityMode.identity())
        np.testing.assert_allclose(bundle.L, np.diag(np.exp(X @ beta)), atol=1e-12)

    def test_all_ones_mode_is_rank_one(self):
        X = np.zeros((2, 1))
        params = ModelParams(beta=np.zeros(1), log_lengthscales=np.zeros(1), similarity_mask=(0,))
        bundle = build_kernel(params, Assortment(X), SimilarityMode.all_ones())
        np.testing.assert_allclose(bundle.L, np.ones((2, 2)), atol=0)
        assert np.linalg.matrix_rank(bundle.L) == 1

    def test_factorization_holds_elementwise(self):
        gen = np.random.default_rng(5)
        for _ in range(30):
            n = int(gen.integers(1, 8))
            X = gen.normal(size=(n, 3))
            params = ModelParams(
                beta=gen.normal(size=3),
                log_lengthscales=gen.normal(size=3),
                similarity_mask=(0, 1, 2),
            )
            bundle = build_kernel(params, Assortment(X))
            np.testing.assert_array_equal(
                bundle.L, bundle.q[:, None] * bundle.S * bundle.q[None, :]
            )
            bundle.validate()

    def test_fixed_mode_validation(self):
        with pytest.raises(ValueError):
            SimilarityMode.fixed(np.array([[1.0, 2.0], [2.0, 1.0]]))  # entries outside [0, 1]
        with pytest.raises(ValueError):
            SimilarityMode.fixed(np.array([[0.5, 0.0], [0.0, 1.0]]))  # diagonal not 1
        good = SimilarityMode.fixed(np.array([[1.0, 0.4], [0.4, 1.0]]))
        X = np.zeros((2, 1))
        params = ModelParams(beta=np.zeros(1), log_lengthscales=np.zeros(1), similarity_mask=(0,))
        bundle = build_kernel(params, Assortment(X), good)
        np.testing.assert_allclose(bundle.S, good.matrix)

    def test_fixed_mode_size_mismatch(self):
        good = SimilarityMode.fixed(np.eye(3))
        params = ModelParams(beta=np.zeros(1), log_lengthscales=np.zeros(1), similarity_mask=(0,))
        with pytest.raises(ValueError):
            build_kernel(params, Assortment(np.zeros((2, 1))), good)

    def test_jitter_keeps_unit_diagonal(self):
        gen = np.random.default_rng(6)
        X = gen.normal(size=(4, 2))
        params = ModelParams(beta=np.zeros(2), log_lengthscales=np.zeros(2), similarity_mask=(0, 1))
        bundle = build_kernel(params, Assortment(X), jitter=1e-4)
        np.testing.assert_allclose(np.diag(bundle.S), 1.0, atol=0)
        assert psd_check(bundle.S)

    def test_quality_mask_restricts_quality_inputs(self):
        gen = np.random.default_rng(7)
        X = gen.normal(size=(4, 3))
        params = ModelParams(
            beta=np.array([2.0]),
            log_lengthscales=np.zeros(1),
            similarity_mask=(1,),
            quality_mask=(0,),
        )
        bundle = build_kernel(params, Assortment(X))
        np.testing.assert_allclose(bundle.q, np.exp(X[:, 0]), rtol=1e-12)


class TestPsdCheck:
    def test_identity(self):
        assert psd_check(np.eye(3), tol=1e-10)

    def test_indefinite(self):
        assert not psd_check(np.array([[1.0, 2.0], [2.0, 1.0]]), tol=1e-10)

    def test_all_ones(self):
        assert psd_check(np.ones((3, 3)))

    def test_asymmetric(self):
        assert not psd_check(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            psd_check(np.zeros((2, 3)))


class TestModelParams:
    def test_lengthscale_groups_expand(self):
        params = ModelParams(
            beta=np.zeros(1),
            log_lengthscales=np.array([0.1, -0.4]),
            similarity_mask=(0, 1, 2),
            quality_mask=(0,),
            lengthscale_groups=(0, 0, 1),
        )
        np.testing.assert_allclose(params.expanded_log_lengthscales(), [0.1, 0.1, -0.4])

    def test_group_count_must_match(self):
        with pytest.raises(ValueError):
            ModelParams(
                beta=np.zeros(1),
                log_lengthscales=np.array([0.1]),
                similarity_mask=(0, 1),
                lengthscale_groups=(0, 1),
            )

    def test_default_one_lengthscale_per_masked_feature(self):
        with pytest.raises(ValueError):
            ModelParams(beta=np.zeros(2), log_lengthscales=np.zeros(1), similarity_mask=(0, 1))
