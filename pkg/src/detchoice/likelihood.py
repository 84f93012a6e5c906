"""Exact subset-choice likelihoods and their enumeration oracle.

For a kernel L over n items, the probability of choosing subset C is

    P(C) = det(L_C) / det(I + L),

with det(L_empty) = 1. Equivalently, through L_ij = q_i S_ij q_j,

    log P(C) = sum_{i in C} 2 log q_i + log det(S_C) - log det(I + L),

which exposes the implied utility of a subset as an additive part plus a
non-positive similarity correction. Both evaluation paths are implemented and
must agree; `enumerate_pmf` provides the brute-force oracle used throughout
the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import logsumexp

from .data import Dataset, PriorSpec
from .exceptions import CapacityError, NumericalError
from .kernel import KernelBundle, ModelParams, SimilarityMode, build_kernel

SubsetIndex = tuple[int, ...]

ENUMERATION_CAP = 15

# Submatrix determinants at or below this absolute value count as zero
# probability; see `log_det_submatrix`.
DET_FLOOR = 1e-300
_LOG_DET_FLOOR = np.log(DET_FLOOR)

# Negative determinants with |det| <= NEG_DET_TOL * prod(max(1, M_ii)) are
# rounding artifacts of a singular submatrix and are clamped to zero.
NEG_DET_TOL = 1e-10


def as_subset(indices, n: int) -> SubsetIndex:
    """Validate and canonicalize a subset of {0, ..., n-1}."""
    subset = tuple(int(i) for i in indices)
    if list(subset) != sorted(set(subset)):
        raise ValueError(f"subset must be sorted and duplicate-free, got {subset}")
    if subset and (subset[0] < 0 or subset[-1] >= n):
        raise ValueError(f"subset {subset} out of range for n={n}")
    return subset


def all_subsets(n: int) -> list[SubsetIndex]:
    """Every subset of {0, ..., n-1} in size-then-lexicographic order."""
    out: list[SubsetIndex] = []
    for size in range(n + 1):
        out.extend(combinations(range(n), size))
    return out


# ---------------------------------------------------------------------------
# Determinant plumbing
# ---------------------------------------------------------------------------


def _slogdet_floor(sub: np.ndarray, log_scale: float) -> tuple[float, bool]:
    """(log det with floor rules applied, suspicious-negative flag).

    The determinant comes from an LU factorization with partial pivoting
    (`np.linalg.slogdet`). Values at or below DET_FLOOR map to -inf. A
    negative determinant is clamped to zero (-inf) when it is within
    NEG_DET_TOL of zero relative to the diagonal scale, and flagged otherwise.
    """
    if sub.shape[0] == 0:
        return 0.0, False
    sign, logabs = np.linalg.slogdet(sub)
    if sign > 0:
        return (float(logabs) if logabs > _LOG_DET_FLOOR else -np.inf), False
    if sign < 0 and logabs > np.log(NEG_DET_TOL) + log_scale:
        return -np.inf, True
    return -np.inf, False


def _diag_log_scale(M: np.ndarray, subset: SubsetIndex) -> float:
    d = np.asarray([M[i, i] for i in subset], dtype=float)
    return float(np.sum(np.log(np.maximum(1.0, d)))) if subset else 0.0


def log_det_submatrix(M: np.ndarray, subset) -> float:
    """log det of the principal submatrix M[C, C]; 0.0 for the empty subset.

    Returns -inf whenever the determinant is at or below the floor, including
    singular and (necessarily spurious, for PSD input) negative determinants.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"M must be square, got shape {M.shape}")
    C = as_subset(subset, M.shape[0])
    if not C:
        return 0.0
    sub = M[np.ix_(C, C)]
    value, _ = _slogdet_floor(sub, _diag_log_scale(M, C))
    return value


def log_normalizer(L: np.ndarray) -> float:
    """log det(I + L) via Cholesky; I + L >= I makes this well posed for PSD L."""
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    A = np.eye(n) + 0.5 * (L + L.T)
    try:
        chol = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        eigs = np.linalg.eigvalsh(A)
        raise NumericalError(
            "Cholesky factorization of I + L failed; is L positive semi-definite?",
            min_eigenvalue=float(eigs.min()),
            max_eigenvalue=float(eigs.max()),
            condition=float(eigs.max() / max(abs(eigs.min()), 1e-300)),
        ) from exc
    return float(2.0 * np.sum(np.log(np.diag(chol))))


def subset_log_dets(L: np.ndarray, cap: int = ENUMERATION_CAP) -> tuple[list[SubsetIndex], np.ndarray]:
    """log det(L_C) for every subset C, floor rules applied.

    Raises NumericalError if any submatrix determinant is negative beyond
    rounding tolerance (the kernel is then not PSD).
    """
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    if n > cap:
        raise CapacityError(f"enumeration over {n} items exceeds the cap of {cap}")
    subsets = all_subsets(n)
    logdets = np.empty(len(subsets))
    for k, C in enumerate(subsets):
        if not C:
            logdets[k] = 0.0
            continue
        sub = L[np.ix_(C, C)]
        value, suspicious = _slogdet_floor(sub, _diag_log_scale(L, C))
        if suspicious:
            raise NumericalError(
                f"submatrix determinant for subset {C} is negative beyond tolerance",
                subset=C,
            )
        logdets[k] = value
    return subsets, logdets


def enumerate_pmf(L: np.ndarray, cap: int = ENUMERATION_CAP) -> dict[SubsetIndex, float]:
    """Exact choice distribution over all 2^n subsets, by brute force."""
    subsets, logdets = subset_log_dets(L, cap=cap)
    log_norm = logsumexp(logdets)
    probs = np.exp(logdets - log_norm)
    return dict(zip(subsets, probs.tolist()))


# ---------------------------------------------------------------------------
# Likelihood and implied utility
# ---------------------------------------------------------------------------


def subset_log_likelihood(bundle: KernelBundle, subset, method: str = "direct") -> float:
    """log P(C), -inf for zero-probability subsets.

    ``method='direct'`` evaluates log det(L_C) - log det(I + L);
    ``method='decomposed'`` evaluates it through the quality/similarity
    factorization. The two agree to high accuracy whenever finite.
    """
    C = as_subset(subset, bundle.n_items)
    if method == "direct":
        num = log_det_submatrix(bundle.L, C)
    elif method == "decomposed":
        num = 2.0 * float(np.sum(np.log(bundle.q[list(C)]))) + log_det_submatrix(bundle.S, C)
    else:
        raise ValueError(f"unknown method {method!r}")
    if num == -np.inf:
        return -np.inf
    return num - log_normalizer(bundle.L)


@dataclass(frozen=True)
class UtilityDecomposition:
    """Implied subset utility split into additive and correction parts.

    total = log det(L_C), additive_part = sum_{i in C} 2 log q_i, and
    correction = log det(S_C) <= 0 for unit-diagonal similarity.
    """

    total: float
    additive_part: float
    correction: float


def implied_utility(bundle: KernelBundle, subset) -> UtilityDecomposition:
    """Decompose the implied utility of a subset; the empty set maps to zeros."""
    C = as_subset(subset, bundle.n_items)
    if not C:
        return UtilityDecomposition(0.0, 0.0, 0.0)
    additive = 2.0 * float(np.sum(np.log(bundle.q[list(C)])))
    correction = log_det_submatrix(bundle.S, C)
    total = log_det_submatrix(bundle.L, C)
    if correction == -np.inf:
        total = -np.inf
    return UtilityDecomposition(total=total, additive_part=additive, correction=correction)


# ---------------------------------------------------------------------------
# Dataset-level posterior
# ---------------------------------------------------------------------------


def dataset_log_posterior(
    params: ModelParams,
    data: Dataset,
    priors: PriorSpec,
    mode: SimilarityMode = SimilarityMode.rbf(),
) -> float:
    """Sum of per-observation log-likelihoods plus the Gaussian log-priors.

    Returns -inf if any observation has zero likelihood under ``params``; an
    optimizer must treat that value as infeasible, not as an error.
    """
    total = priors.log_density(params.beta, params.log_lengthscales)
    for obs in data.observations:
        bundle = build_kernel(params, obs.assortment, mode)
        ll = subset_log_likelihood(bundle, obs.chosen)
        if ll == -np.inf:
            return -np.inf
        total += ll
    return total


def grad_log_posterior(
    params: ModelParams,
    data: Dataset,
    priors: PriorSpec,
    mode: SimilarityMode = SimilarityMode.rbf(),
    lengthscale_method: str = "fd",
    fd_step: float = 1e-5,
) -> np.ndarray:
    """Gradient of the log posterior with respect to (beta, log lengthscales).

    The beta block is analytic: per observation it is
    sum_{i in C} x_i - sum_{i in A} K_ii x_i with K = L (I + L)^{-1}
    (verified against central finite differences in the test suite). The
    lengthscale block uses central finite differences by default; pass
    ``lengthscale_method='analytic'`` for the closed form.
    """
    base = dataset_log_posterior(params, data, priors, mode)
    if not np.isfinite(base):
        raise ValueError("gradient requested at a point with -inf log posterior")

    gb, gl = priors.grad_log_density(params.beta, params.log_lengthscales)
    grad_beta = gb.copy()
    for obs in data.observations:
        Xq = params.quality_features(obs.assortment)
        bundle = build_kernel(params, obs.assortment, mode)
        n = bundle.n_items
        Ainv = np.linalg.inv(np.eye(n) + bundle.L)
        k_diag = 1.0 - np.diag(Ainv)  # diag of L (I+L)^{-1}
        grad_beta += Xq[list(obs.chosen)].sum(axis=0) - k_diag @ Xq

    n_ell = params.n_free_lengthscales
    grad_ell = gl.copy() if n_ell else np.zeros(0)
    if n_ell:
        if lengthscale_method == "fd":
            grad_ell = np.empty(n_ell)
            for k in range(n_ell):
                h = fd_step * max(1.0, abs(params.log_lengthscales[k]))
                up = params.log_lengthscales.copy()
                dn = params.log_lengthscales.copy()
                up[k] += h
                dn[k] -= h
                lp_up = dataset_log_posterior(params.with_theta(params.beta, up), data, priors, mode)
                lp_dn = dataset_log_posterior(params.with_theta(params.beta, dn), data, priors, mode)
                if np.isfinite(lp_up) and np.isfinite(lp_dn):
                    grad_ell[k] = (lp_up - lp_dn) / (2 * h)
                elif np.isfinite(lp_up):
                    grad_ell[k] = (lp_up - base) / h
                elif np.isfinite(lp_dn):
                    grad_ell[k] = (base - lp_dn) / h
                else:
                    raise ValueError("finite-difference stencil left the model's support")
        elif lengthscale_method == "analytic":
            grad_ell = gl.copy()
            for obs in data.observations:
                grad_ell += _lengthscale_grad_observation(params, obs, mode)
        else:
            raise ValueError(f"unknown lengthscale_method {lengthscale_method!r}")

    return np.concatenate([grad_beta, grad_ell])


def _lengthscale_grad_observation(params: ModelParams, obs, mode: SimilarityMode) -> np.ndarray:
    """Analytic d log P(C) / d log l, one observation.

    dS_ij / d log l_k = S_ij * (x_ik - x_jk)^2 / l_k^2 on the masked features;
    grouped lengthscales sum the per-feature terms of their group.
    """
    if mode.kind != "rbf":
        # similarity does not depend on lengthscales in the other modes
        return np.zeros(params.n_free_lengthscales)
    Xs = params.similarity_features(obs.assortment)
    ell = params.lengthscales()
    bundle = build_kernel(params, obs.assortment, mode)
    n = bundle.n_items
    C = list(obs.chosen)
    Ainv = np.linalg.inv(np.eye(n) + bundle.L)
    S_C = bundle.S[np.ix_(C, C)]
    S_C_inv = np.linalg.inv(S_C) if C else np.zeros((0, 0))

    n_masked = Xs.shape[1]
    per_feature = np.empty(n_masked)
    for k in range(n_masked):
        W = (Xs[:, k][:, None] - Xs[:, k][None, :]) ** 2 / ell[k] ** 2
        dS = bundle.S * W
        dL = bundle.q[:, None] * dS * bundle.q[None, :]
        term = -float(np.sum(Ainv * dL))  # -tr((I+L)^{-1} dL)
        if C:
            term += float(np.sum(S_C_inv * dS[np.ix_(C, C)]))  # tr(S_C^{-1} dS_C)
        per_feature[k] = term
    if params.lengthscale_groups is None:
        return per_feature
    out = np.zeros(params.n_free_lengthscales)
    np.add.at(out, list(params.lengthscale_groups), per_feature)
    return out
