"""Numerical verification suites.

Six check families, each contrasting two independent routes to the same
quantity:

1. normalizer: sum of all subset determinants vs det(I + L).
2. gumbel_rum: the noisy-utility-maximization sampler vs the enumerated pmf.
3. decomposition: subset utility vs additive part + similarity correction.
4. identity_logistic: identity similarity vs the logistic product likelihood,
   exact and in the small-lengthscale limit.
5. all_ones_mnl: all-ones similarity vs MNL on singletons and the empty set.
6. spectral_sampler: the eigendecomposition sampler vs the enumerated pmf.

`run_all` returns machine-readable results; the CLI maps any failure to exit
code 3. The ``inject_fault`` hook flips a sign inside family 3 so the harness
itself can be exercised end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .baselines import logistic_log_likelihood, mnl_log_likelihood, sigmoid
from .kernel import Assortment, ModelParams, SimilarityMode, build_kernel
from .likelihood import (
    all_subsets,
    enumerate_pmf,
    implied_utility,
    log_normalizer,
    subset_log_dets,
    subset_log_likelihood,
)
from .rng import RngState
from .sampling import gumbel_rum_sample_many, spectral_sample_many

CHECK_NAMES = (
    "normalizer",
    "gumbel_rum",
    "decomposition",
    "identity_logistic",
    "all_ones_mnl",
    "spectral_sampler",
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    max_deviation: float
    tolerance: float
    n_trials: int
    detail: dict = field(default_factory=dict)
    failing_case: dict | None = None

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "max_deviation": self.max_deviation,
            "tolerance": self.tolerance,
            "n_trials": self.n_trials,
            "detail": self.detail,
            "failing_case": self.failing_case,
        }


# ---------------------------------------------------------------------------
# Random instances
# ---------------------------------------------------------------------------


def random_psd(n: int, gen: np.random.Generator) -> np.ndarray:
    A = gen.standard_normal((n, n + 2))
    return A @ A.T / (n + 2)


def random_bundle(gen: np.random.Generator, n: int, d: int = 3):
    """A kernel bundle from random features and moderate random parameters."""
    X = gen.normal(size=(n, d))
    params = ModelParams(
        beta=gen.normal(scale=0.6, size=d),
        log_lengthscales=gen.normal(scale=0.5, size=d),
        similarity_mask=tuple(range(d)),
    )
    return params, Assortment(X), build_kernel(params, Assortment(X))


def tv_distance(samples, pmf: dict) -> float:
    """Total variation between empirical sample frequencies and a pmf."""
    counts: dict = {}
    for s in samples:
        counts[s] = counts.get(s, 0) + 1
    n = len(samples)
    support = set(pmf) | set(counts)
    return 0.5 * sum(abs(counts.get(c, 0) / n - pmf.get(c, 0.0)) for c in support)


# ---------------------------------------------------------------------------
# Check families
# ---------------------------------------------------------------------------


def check_normalizer(n_trials: int = 200, seed: int = 0) -> CheckResult:
    """Relative error of det(I + L) against brute-force subset enumeration."""
    gen = RngState(seed, key=(1,)).generator()
    tol = 1e-8
    worst, worst_case = 0.0, None
    for t in range(n_trials):
        n = int(gen.integers(1, 11))
        L = random_psd(n, gen)
        _, logdets = subset_log_dets(L)
        rel = abs(float(np.expm1(logsumexp(logdets) - log_normalizer(L))))
        if rel > worst:
            worst, worst_case = rel, {"L": L.tolist(), "trial": t}
    passed = worst <= tol
    return CheckResult(
        "normalizer", passed, worst, tol, n_trials, failing_case=None if passed else worst_case
    )


def check_gumbel_rum(n_kernels: int = 20, n_draws: int = 100_000, seed: int = 0) -> CheckResult:
    """Noisy-utility argmax sampling matches det-proportional probabilities."""
    gen = RngState(seed, key=(2,)).generator()
    tol = 0.02
    worst, worst_case = 0.0, None
    for t in range(n_kernels):
        n = int(gen.integers(2, 6))
        _, _, bundle = random_bundle(gen, n)
        pmf = enumerate_pmf(bundle.L)
        samples = gumbel_rum_sample_many(bundle.L, n_draws, gen)
        tv = tv_distance(samples, pmf)
        if tv > worst:
            worst, worst_case = tv, {"L": bundle.L.tolist(), "trial": t}
    passed = worst <= tol
    return CheckResult(
        "gumbel_rum",
        passed,
        worst,
        tol,
        n_kernels,
        detail={"n_draws": n_draws},
        failing_case=None if passed else worst_case,
    )


def check_decomposition(n_pairs: int = 1000, seed: int = 0, inject_fault: bool = False) -> CheckResult:
    """Subset utility equals its additive part plus the similarity correction."""
    gen = RngState(seed, key=(3,)).generator()
    tol = 1e-9
    corr_tol = 1e-12
    worst, worst_case = 0.0, None
    done = 0
    while done < n_pairs:
        n = int(gen.integers(2, 7))
        _, _, bundle = random_bundle(gen, n)
        # largest subsets first so short runs still exercise nonzero corrections
        for C in reversed(all_subsets(n)):
            if done >= n_pairs:
                break
            u = implied_utility(bundle, C)
            correction = -u.correction if inject_fault else u.correction
            if np.isfinite(u.total):
                dev = abs(u.total - (u.additive_part + correction))
            else:
                dev = 0.0 if correction == -np.inf else np.inf
            dev = max(dev, correction - corr_tol if correction > corr_tol else 0.0)
            if dev > worst:
                worst, worst_case = dev, {"L": bundle.L.tolist(), "subset": list(C)}
            done += 1
    passed = worst <= tol
    return CheckResult(
        "decomposition",
        passed,
        worst,
        tol,
        n_pairs,
        detail={"correction_tolerance": corr_tol, "fault_injected": inject_fault},
        failing_case=None if passed else worst_case,
    )


def _logistic_pmf(beta: np.ndarray, X: np.ndarray) -> dict:
    p = sigmoid(X @ beta)
    out = {}
    for C in all_subsets(X.shape[0]):
        mask = np.zeros(X.shape[0], dtype=bool)
        mask[list(C)] = True
        out[C] = float(np.prod(np.where(mask, p, 1.0 - p)))
    return out


def check_identity_logistic(n_instances: int = 100, seed: int = 0) -> CheckResult:
    """Identity similarity collapses the model to independent logistic labels.

    Exact: per-subset log-likelihood agreement. Limit: with lengthscales at
    1e-3 of the smallest pairwise feature distance, the whole pmf is within
    TV 1e-6 of the logistic pmf.
    """
    gen = RngState(seed, key=(4,)).generator()
    tol = 1e-9
    tv_tol = 1e-6
    worst, worst_case = 0.0, None
    worst_tv = 0.0
    for t in range(n_instances):
        n = int(gen.integers(1, 7))
        d = int(gen.integers(1, 4))
        X = gen.normal(size=(n, d))
        beta = gen.normal(scale=0.8, size=d)
        A = Assortment(X)
        params = ModelParams(beta=beta, log_lengthscales=np.zeros(d), similarity_mask=tuple(range(d)))
        bundle = build_kernel(params, A, SimilarityMode.identity())
        C = tuple(sorted(gen.choice(n, size=int(gen.integers(0, n + 1)), replace=False).tolist()))
        dev = abs(subset_log_likelihood(bundle, C) - logistic_log_likelihood(beta, A, C))
        if dev > worst:
            worst, worst_case = dev, {"X": X.tolist(), "beta": beta.tolist(), "subset": list(C)}

        if n >= 2:
            dists = np.sqrt(np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=-1))
            min_dist = dists[np.triu_indices(n, k=1)].min()
            limit_params = params.with_theta(beta, np.full(d, np.log(1e-3 * min_dist)))
            limit_bundle = build_kernel(limit_params, A)
            pmf = enumerate_pmf(limit_bundle.L)
            ref = _logistic_pmf(beta, X)
            tv = 0.5 * sum(abs(pmf[c] - ref[c]) for c in ref)
            worst_tv = max(worst_tv, tv)

    passed = worst <= tol and worst_tv <= tv_tol
    return CheckResult(
        "identity_logistic",
        passed,
        worst,
        tol,
        n_instances,
        detail={"limit_mode_tv": worst_tv, "limit_mode_tolerance": tv_tol},
        failing_case=None if passed else worst_case,
    )


def check_all_ones_mnl(n_instances: int = 100, seed: int = 0) -> CheckResult:
    """All-ones similarity collapses the model to MNL over single items."""
    gen = RngState(seed, key=(5,)).generator()
    tol = 1e-9
    pair_tol = 1e-10
    worst, worst_case = 0.0, None
    worst_pair = 0.0
    for t in range(n_instances):
        n = int(gen.integers(1, 7))
        d = int(gen.integers(1, 4))
        X = gen.normal(size=(n, d))
        beta = gen.normal(scale=0.8, size=d)
        A = Assortment(X)
        params = ModelParams(beta=beta, log_lengthscales=np.zeros(d), similarity_mask=tuple(range(d)))
        bundle = build_kernel(params, A, SimilarityMode.all_ones())
        pmf = enumerate_pmf(bundle.L)
        for C, prob in pmf.items():
            if len(C) >= 2:
                worst_pair = max(worst_pair, prob)
        choice = () if gen.random() < 0.3 else (int(gen.integers(n)),)
        dev = abs(subset_log_likelihood(bundle, choice) - mnl_log_likelihood(beta, A, choice))
        if dev > worst:
            worst, worst_case = dev, {"X": X.tolist(), "beta": beta.tolist(), "choice": list(choice)}
    passed = worst <= tol and worst_pair <= pair_tol
    return CheckResult(
        "all_ones_mnl",
        passed,
        worst,
        tol,
        n_instances,
        detail={"max_multi_item_probability": worst_pair, "multi_item_tolerance": pair_tol},
        failing_case=None if passed else worst_case,
    )


def check_spectral_sampler(
    n_kernels: int = 10, n_draws: int = 100_000, size: int = 4, seed: int = 0
) -> CheckResult:
    """Eigendecomposition sampling matches the enumerated pmf."""
    gen = RngState(seed, key=(6,)).generator()
    tol = 0.02
    worst, worst_case = 0.0, None
    for t in range(n_kernels):
        _, _, bundle = random_bundle(gen, size)
        pmf = enumerate_pmf(bundle.L)
        samples = spectral_sample_many(bundle.L, n_draws, gen)
        tv = tv_distance(samples, pmf)
        if tv > worst:
            worst, worst_case = tv, {"L": bundle.L.tolist(), "trial": t}
    passed = worst <= tol
    return CheckResult(
        "spectral_sampler",
        passed,
        worst,
        tol,
        n_kernels,
        detail={"n_draws": n_draws},
        failing_case=None if passed else worst_case,
    )


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

_DEFAULT_TRIALS = {
    "normalizer": 200,
    "gumbel_rum": 20,
    "decomposition": 1000,
    "identity_logistic": 100,
    "all_ones_mnl": 100,
    "spectral_sampler": 10,
}


def run_all(seed: int = 0, trials: int | None = None, inject_fault: bool = False) -> list[CheckResult]:
    """Run every check family.

    ``trials=None`` uses the full default sizes; an explicit value caps each
    family's instance count (``trials=1`` is the smoke mode) and scales the
    sampler draw counts down to keep the smoke run fast.
    """

    def size(name):
        return _DEFAULT_TRIALS[name] if trials is None else max(1, min(trials, _DEFAULT_TRIALS[name]))

    draws = 100_000 if trials is None or trials >= 10 else 30_000
    return [
        check_normalizer(size("normalizer"), seed),
        check_gumbel_rum(size("gumbel_rum"), draws, seed),
        check_decomposition(size("decomposition"), seed, inject_fault=inject_fault),
        check_identity_logistic(size("identity_logistic"), seed),
        check_all_ones_mnl(size("all_ones_mnl"), seed),
        check_spectral_sampler(size("spectral_sampler"), draws, seed=seed),
    ]
