"""Exact subset samplers for a PSD kernel.

Three interchangeable mechanisms draw from the same distribution
P(C) proportional to det(L_C):

* `spectral_sample`: the eigendecomposition-based sampler (select eigenvectors
  independently with probability lambda/(1+lambda), then run the projection
  elimination step). Scales to any n.
* `enumeration_sample`: inverse-CDF over the brute-force pmf (n <= cap).
* `gumbel_rum_sample`: maximize log det(L_C) + Gumbel noise over all subsets
  (n <= cap); zero-probability subsets carry utility -inf and never win.

Their distributional agreement is checked by the verification suite.
"""

from __future__ import annotations

import numpy as np

from .exceptions import NumericalError
from .likelihood import ENUMERATION_CAP, SubsetIndex, enumerate_pmf, subset_log_dets
from .rng import as_generator

# Eigenvalues below this fraction of the largest are treated as exact zeros so
# rank-deficient kernels (e.g. all-ones similarity) sample correctly.
EIG_FLOOR = 1e-12


def _eig_decompose(L: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    L = np.asarray(L, dtype=float)
    try:
        eigvals, eigvecs = np.linalg.eigh(0.5 * (L + L.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalError("eigendecomposition of the kernel failed") from exc
    lam_max = max(float(eigvals.max(initial=0.0)), 0.0)
    eigvals = np.where(eigvals < EIG_FLOOR * max(lam_max, 1.0), 0.0, eigvals)
    return eigvals, eigvecs


def _categorical(p: np.ndarray, gen: np.random.Generator) -> int:
    # inverse-CDF draw; cheaper than Generator.choice in tight loops
    return int(np.searchsorted(np.cumsum(p), gen.random() * p.sum(), side="right"))


def _projection_sample(V: np.ndarray, gen: np.random.Generator) -> list[int]:
    """Sample from the projection DPP spanned by orthonormal columns of V."""
    items: list[int] = []
    while V.shape[1] > 0:
        row_norms = np.einsum("ij,ij->i", V, V)
        i = _categorical(row_norms, gen)
        items.append(i)
        if V.shape[1] == 1:
            break
        j = int(np.argmax(np.abs(V[i, :])))
        # zero out row i, drop the pivot column, re-orthonormalize the rest
        V = V - np.outer(V[:, j] / V[i, j], V[i, :])
        V = np.delete(V, j, axis=1)
        V, _ = np.linalg.qr(V)
    return items


def spectral_sample(L: np.ndarray, rng) -> SubsetIndex:
    """One exact draw via the eigendecomposition algorithm."""
    gen = as_generator(rng)
    eigvals, eigvecs = _eig_decompose(L)
    return _spectral_draw(eigvals, eigvecs, gen)


def _spectral_draw(
    eigvals: np.ndarray, eigvecs: np.ndarray, gen: np.random.Generator
) -> SubsetIndex:
    keep = gen.random(eigvals.shape[0]) < eigvals / (1.0 + eigvals)
    if not np.any(keep):
        return ()
    items = _projection_sample(eigvecs[:, keep], gen)
    return tuple(sorted(items))


def spectral_sample_many(L: np.ndarray, n_draws: int, rng) -> list[SubsetIndex]:
    """Repeated spectral draws sharing one eigendecomposition."""
    gen = as_generator(rng)
    eigvals, eigvecs = _eig_decompose(L)
    return [_spectral_draw(eigvals, eigvecs, gen) for _ in range(n_draws)]


def enumeration_sample(L: np.ndarray, rng, cap: int = ENUMERATION_CAP) -> SubsetIndex:
    """One exact draw by inverse CDF over the enumerated pmf."""
    return enumeration_sample_many(L, 1, rng, cap=cap)[0]


def enumeration_sample_many(
    L: np.ndarray, n_draws: int, rng, cap: int = ENUMERATION_CAP
) -> list[SubsetIndex]:
    gen = as_generator(rng)
    pmf = enumerate_pmf(L, cap=cap)
    subsets = list(pmf.keys())
    cdf = np.cumsum(list(pmf.values()))
    cdf[-1] = 1.0
    picks = np.searchsorted(cdf, gen.random(n_draws), side="right")
    return [subsets[k] for k in picks]


def gumbel_rum_sample(L: np.ndarray, rng, cap: int = ENUMERATION_CAP) -> SubsetIndex:
    """One draw as the subset maximizing log det(L_C) + standard Gumbel noise."""
    return gumbel_rum_sample_many(L, 1, rng, cap=cap)[0]


def gumbel_rum_sample_many(
    L: np.ndarray, n_draws: int, rng, cap: int = ENUMERATION_CAP, batch: int = 4096
) -> list[SubsetIndex]:
    """Repeated utility-maximization draws sharing one utility table.

    Gumbel noise is generated by inverse CDF, -log(-log U) with U in the open
    unit interval, so -inf utilities (zero-probability subsets) stay -inf and
    are excluded from the argmax automatically.
    """
    gen = as_generator(rng)
    subsets, utilities = subset_log_dets(L, cap=cap)
    out: list[SubsetIndex] = []
    remaining = n_draws
    while remaining > 0:
        m = min(batch, remaining)
        u = gen.random((m, utilities.shape[0]))
        np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg, out=u)
        noisy = utilities[None, :] - np.log(-np.log(u))
        winners = np.argmax(noisy, axis=1)
        out.extend(subsets[k] for k in winners)
        remaining -= m
    return out
