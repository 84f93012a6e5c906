"""Sampler correctness against the enumeration oracle."""

import numpy as np
from scipy.stats import chisquare

from detchoice import (
    RngState,
    enumerate_pmf,
    enumeration_sample,
    gumbel_rum_sample,
    spectral_sample,
)
from detchoice.sampling import (
    enumeration_sample_many,
    gumbel_rum_sample_many,
    spectral_sample_many,
)
from detchoice.verify import random_bundle, tv_distance


class TestSpectralSampler:
    def test_zero_kernel_always_empty(self):
        gen = RngState(0).generator()
        for _ in range(20):
            assert spectral_sample(np.zeros((3, 3)), gen) == ()

    def test_huge_eigenvalue_dominates(self):
        L = np.diag([1e9, 0.0])
        samples = spectral_sample_many(L, 500, RngState(1))
        assert all(s == (0,) for s in samples)

    def test_matches_enumeration_pmf(self):
        gen = RngState(2).generator()
        for trial in range(3):
            _, _, bundle = random_bundle(gen, 4)
            pmf = enumerate_pmf(bundle.L)
            samples = spectral_sample_many(bundle.L, 40_000, gen)
            tv = tv_distance(samples, pmf)
            assert tv <= 0.02, f"trial {trial}: TV {tv:.4f}"

    def test_rank_deficient_kernel(self):
        # rank-1 kernel: at most one item can ever be sampled
        L = np.ones((3, 3))
        samples = spectral_sample_many(L, 2000, RngState(3))
        assert all(len(s) <= 1 for s in samples)

    def test_singleton_marginals_match_inclusion_probabilities(self):
        """Item inclusion frequencies match diag(L (I+L)^-1) within 3 Ses."""
        gen = RngState(4).generator()
        _, _, bundle = random_bundle(gen, 5)
        n_draws = 40_000
        samples = spectral_sample_many(bundle.L, n_draws, gen)
        counts = np.zeros(5)
        for s in samples:
            counts[list(s)] += 1
        freq = counts / n_draws
        K = bundle.L @ np.linalg.inv(np.eye(5) + bundle.L)
        p = np.diag(K)
        se = np.sqrt(p * (1 - p) / n_draws)
        assert np.all(np.abs(freq - p) <= 3 * se), (freq, p)

    def test_deterministic_under_seed(self):
        gen = RngState(5).generator()
        _, _, bundle = random_bundle(gen, 4)
        a = spectral_sample_many(bundle.L, 200, RngState(99))
        b = spectral_sample_many(bundle.L, 200, RngState(99))
        assert a == b


class TestEnumerationSampler:
    def test_never_emits_zero_probability_subset(self):
        samples = enumeration_sample_many(np.ones((2, 2)), 3000, RngState(6))
        assert (0, 1) not in samples

    def test_deterministic_under_seed(self):
        gen = RngState(7).generator()
        _, _, bundle = random_bundle(gen, 3)
        assert enumeration_sample(bundle.L, RngState(8)) == enumeration_sample(bundle.L, RngState(8))

    def test_chi_square_goodness_of_fit(self):
        gen = RngState(9).generator()
        _, _, bundle = random_bundle(gen, 3)
        pmf = enumerate_pmf(bundle.L)
        n_draws = 50_000
        samples = enumeration_sample_many(bundle.L, n_draws, gen)
        subsets = list(pmf.keys())
        idx = {c: i for i, c in enumerate(subsets)}
        counts = np.zeros(len(subsets))
        for s in samples:
            counts[idx[s]] += 1
        expected = np.array([pmf[c] * n_draws for c in subsets])
        keep = expected > 5
        # rescale so observed and expected sums match over the kept cells
        result = chisquare(counts[keep], expected[keep] * counts[keep].sum() / expected[keep].sum())
        assert result.pvalue > 0.001, result


class TestGumbelRumSampler:
    def test_zero_kernel_always_empty(self):
        assert gumbel_rum_sample(np.zeros((3, 3)), RngState(10)) == ()

    def test_matches_enumeration_pmf(self):
        gen = RngState(11).generator()
        for trial in range(3):
            _, _, bundle = random_bundle(gen, 4)
            pmf = enumerate_pmf(bundle.L)
            samples = gumbel_rum_sample_many(bundle.L, 50_000, gen)
            tv = tv_distance(samples, pmf)
            assert tv <= 0.02, f"trial {trial}: TV {tv:.4f}"

    def test_excludes_impossible_subsets(self):
        samples = gumbel_rum_sample_many(np.ones((2, 2)), 3000, RngState(12))
        assert (0, 1) not in samples


class TestThreeWayAgreement:
    def test_all_samplers_share_one_distribution(self):
        """Spectral, enumeration, and noisy-utility draws agree pairwise."""
        gen = RngState(13).generator()
        for n in (3, 5):
            _, _, bundle = random_bundle(gen, n)
            pmf = enumerate_pmf(bundle.L)
            n_draws = 50_000
            draws = {
                "spectral": spectral_sample_many(bundle.L, n_draws, gen),
                "enumeration": enumeration_sample_many(bundle.L, n_draws, gen),
                "gumbel": gumbel_rum_sample_many(bundle.L, n_draws, gen),
            }
            for name, s in draws.items():
                tv = tv_distance(s, pmf)
                assert tv <= 0.02, f"{name} at n={n}: TV {tv:.4f}"
