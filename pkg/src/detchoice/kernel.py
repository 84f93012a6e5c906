"""Feature-parametrized subset-choice kernels.

An assortment of n items with d-dimensional features is mapped to a positive
semi-definite kernel L with entries

    L[i, j] = q_i * S[i, j] * q_j,

where q_i = exp(0.5 * beta . x_i) is the item quality and S is a similarity
matrix with unit diagonal and entries in [0, 1]. The similarity is either an
anisotropic squared-exponential (RBF) over a configurable subset of feature
dimensions, the identity (independent items), the all-ones matrix (mutually
exclusive items), or a user-supplied fixed matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Assortment:
    """An offered set of items: an (n, d) feature matrix plus unique ids."""

    features: np.ndarray
    ids: tuple[str, ...] = ()

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-d (n, d), got shape {feats.shape}")
        if feats.shape[0] < 1:
            raise ValueError("an assortment must contain at least one item")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features must be finite")
        object.__setattr__(self, "features", feats)
        ids = self.ids or tuple(f"item-{i}" for i in range(feats.shape[0]))
        if len(ids) != feats.shape[0]:
            raise ValueError("ids length must match the number of items")
        if len(set(ids)) != len(ids):
            raise ValueError("item ids must be unique within an assortment")
        object.__setattr__(self, "ids", tuple(ids))

    @property
    def n_items(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ModelParams:
    """Quality coefficients and similarity lengthscales.

    Attributes:
        beta: quality coefficients, one per quality feature.
        log_lengthscales: free log-lengthscales. Without ``lengthscale_groups``
            there is one per masked similarity feature; with groups there is
            one per group and each masked feature uses its group's value.
        similarity_mask: feature indices the similarity kernel sees.
        quality_mask: feature indices the quality model sees (None = all).
        lengthscale_groups: optional group id per masked feature; ids must be
            0..G-1 with every id used.
    """

    beta: np.ndarray
    log_lengthscales: np.ndarray
    similarity_mask: tuple[int, ...]
    quality_mask: tuple[int, ...] | None = None
    lengthscale_groups: tuple[int, ...] | None = None

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        logl = np.atleast_1d(np.asarray(self.log_lengthscales, dtype=float))
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta must be finite")
        if not np.all(np.isfinite(logl)):
            raise ValueError("log_lengthscales must be finite")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "log_lengthscales", logl)
        object.__setattr__(self, "similarity_mask", tuple(int(i) for i in self.similarity_mask))
        if self.quality_mask is not None:
            object.__setattr__(self, "quality_mask", tuple(int(i) for i in self.quality_mask))
        if self.lengthscale_groups is not None:
            groups = tuple(int(g) for g in self.lengthscale_groups)
            if len(groups) != len(self.similarity_mask):
                raise ValueError("lengthscale_groups must assign one group per masked feature")
            n_groups = max(groups) + 1 if groups else 0
            if set(groups) != set(range(n_groups)):
                raise ValueError("group ids must be 0..G-1 with every id used")
            if len(logl) != n_groups:
                raise ValueError(f"expected {n_groups} free log-lengthscales, got {len(logl)}")
            object.__setattr__(self, "lengthscale_groups", groups)
        elif len(logl) != len(self.similarity_mask):
            raise ValueError(
                f"expected {len(self.similarity_mask)} log-lengthscales "
                f"(one per masked feature), got {len(logl)}"
            )

    @property
    def n_free_lengthscales(self) -> int:
        return len(self.log_lengthscales)

    def expanded_log_lengthscales(self) -> np.ndarray:
        """Per-masked-feature log-lengthscales with group sharing applied."""
        if self.lengthscale_groups is None:
            return self.log_lengthscales
        return self.log_lengthscales[list(self.lengthscale_groups)]

    def lengthscales(self) -> np.ndarray:
        """Per-masked-feature lengthscales (strictly positive)."""
        return np.exp(self.expanded_log_lengthscales())

    def quality_features(self, assortment: Assortment) -> np.ndarray:
        X = assortment.features
        if self.quality_mask is None:
            return X
        return X[:, list(self.quality_mask)]

    def similarity_features(self, assortment: Assortment) -> np.ndarray:
        return assortment.features[:, list(self.similarity_mask)]

    def with_theta(self, beta: np.ndarray, log_lengthscales: np.ndarray) -> "ModelParams":
        """Copy with new coefficient values, keeping masks and groups."""
        return ModelParams(
            beta=beta,
            log_lengthscales=log_lengthscales,
            similarity_mask=self.similarity_mask,
            quality_mask=self.quality_mask,
            lengthscale_groups=self.lengthscale_groups,
        )


@dataclass(frozen=True)
class SimilarityMode:
    """How the similarity matrix S is produced.

    ``rbf`` applies the anisotropic RBF to the masked features; ``identity``
    and ``all_ones`` are the exact limiting structures (no jitter is ever
    applied to them); ``fixed`` uses a validated user matrix.
    """

    kind: str
    matrix: np.ndarray | None = None

    _KINDS = ("rbf", "identity", "all_ones", "fixed")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"kind must be one of {self._KINDS}, got {self.kind!r}")
        if (self.kind == "fixed") != (self.matrix is not None):
            raise ValueError("a matrix is required exactly when kind='fixed'")
        if self.matrix is not None:
            M = np.asarray(self.matrix, dtype=float)
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise ValueError("fixed similarity matrix must be square")
            if not np.allclose(np.diag(M), 1.0, atol=1e-12):
                raise ValueError("fixed similarity matrix must have unit diagonal")
            if M.min() < -1e-12 or M.max() > 1.0 + 1e-12:
                raise ValueError("fixed similarity entries must lie in [0, 1]")
            if not psd_check(M, tol=1e-8):
                raise ValueError("fixed similarity matrix failed the PSD check")
            object.__setattr__(self, "matrix", M)

    @classmethod
    def rbf(cls) -> "SimilarityMode":
        return cls("rbf")

    @classmethod
    def identity(cls) -> "SimilarityMode":
        return cls("identity")

    @classmethod
    def all_ones(cls) -> "SimilarityMode":
        return cls("all_ones")

    @classmethod
    def fixed(cls, matrix: np.ndarray) -> "SimilarityMode":
        return cls("fixed", matrix)

    @classmethod
    def parse(cls, name: str) -> "SimilarityMode":
        return cls(name.replace("-", "_"))


@dataclass(frozen=True)
class KernelBundle:
    """Quality vector q, similarity matrix S, and kernel L = diag(q) S diag(q)."""

    q: np.ndarray
    S: np.ndarray
    L: np.ndarray

    @property
    def n_items(self) -> int:
        return self.q.shape[0]

    def validate(self, tol: float = 1e-8) -> None:
        """Raise if the bundle violates its structural invariants."""
        n = self.n_items
        if self.S.shape != (n, n) or self.L.shape != (n, n):
            raise ValueError("q, S, L shapes are inconsistent")
        if np.any(self.q <= 0):
            raise ValueError("qualities must be strictly positive")
        if not np.allclose(self.S, self.S.T, atol=tol):
            raise ValueError("S must be symmetric")
        if not np.allclose(np.diag(self.S), 1.0, atol=tol):
            raise ValueError("S must have unit diagonal")
        if self.S.min() < -tol or self.S.max() > 1.0 + tol:
            raise ValueError("S entries must lie in [0, 1]")
        if not psd_check(self.S, tol=tol):
            raise ValueError("S failed the PSD check")
        if not np.allclose(self.L, self.q[:, None] * self.S * self.q[None, :], rtol=0, atol=0):
            raise ValueError("L must equal q_i * S_ij * q_j exactly")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def quality(beta: np.ndarray, x: np.ndarray) -> float:
    """exp(0.5 * beta . x); the squared quality is exp(beta . x)."""
    beta = np.asarray(beta, dtype=float)
    x = np.asarray(x, dtype=float)
    if beta.shape != x.shape:
        raise ValueError(f"dimension mismatch: beta {beta.shape} vs x {x.shape}")
    return float(np.exp(0.5 * beta @ x))


def quality_vector(beta: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Vectorized quality over the rows of an (n, d) feature matrix."""
    X = np.asarray(X, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if X.shape[1] != beta.shape[0]:
        raise ValueError(f"dimension mismatch: X has {X.shape[1]} features, beta has {beta.shape[0]}")
    return np.exp(0.5 * (X @ beta))


def rbf_similarity(lengthscales: np.ndarray, x_i: np.ndarray, x_j: np.ndarray) -> float:
    """Anisotropic RBF similarity exp(-0.5 * sum_k (x_ik - x_jk)^2 / l_k^2).

    Equals 1 exactly when the two points coincide on every dimension, and is
    symmetric in its point arguments.
    """
    ell = np.atleast_1d(np.asarray(lengthscales, dtype=float))
    x_i = np.atleast_1d(np.asarray(x_i, dtype=float))
    x_j = np.atleast_1d(np.asarray(x_j, dtype=float))
    if np.any(ell <= 0):
        raise ValueError("lengthscales must be strictly positive")
    if not (ell.shape == x_i.shape == x_j.shape):
        raise ValueError(
            f"dimension mismatch: lengthscales {ell.shape}, x_i {x_i.shape}, x_j {x_j.shape}"
        )
    z = (x_i - x_j) / ell
    return float(np.exp(-0.5 * np.dot(z, z)))


def rbf_similarity_matrix(lengthscales: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Gram matrix of :func:`rbf_similarity` over the rows of X."""
    X = np.asarray(X, dtype=float)
    ell = np.atleast_1d(np.asarray(lengthscales, dtype=float))
    if np.any(ell <= 0):
        raise ValueError("lengthscales must be strictly positive")
    if X.ndim != 2 or X.shape[1] != ell.shape[0]:
        raise ValueError(f"X must be (n, {ell.shape[0]}), got {X.shape}")
    Z = X / ell
    sq = np.sum((Z[:, None, :] - Z[None, :, :]) ** 2, axis=-1)
    S = np.exp(-0.5 * sq)
    # exact unit diagonal and symmetry regardless of rounding in sq
    S = 0.5 * (S + S.T)
    np.fill_diagonal(S, 1.0)
    return S


def build_kernel(
    params: ModelParams,
    assortment: Assortment,
    mode: SimilarityMode = SimilarityMode.rbf(),
    jitter: float = 0.0,
) -> KernelBundle:
    """Construct the kernel bundle (q, S, L) for one assortment.

    ``jitter`` shrinks S toward the identity, (S + jitter*I) / (1 + jitter),
    preserving the unit diagonal; it is meant for ill-conditioned fitting runs
    and is never applied to the exact identity / all-ones modes.
    """
    n = assortment.n_items
    q = quality_vector(params.beta, params.quality_features(assortment))
    if mode.kind == "rbf":
        S = rbf_similarity_matrix(params.lengthscales(), params.similarity_features(assortment))
        if jitter > 0.0:
            S = (S + jitter * np.eye(n)) / (1.0 + jitter)
            np.fill_diagonal(S, 1.0)
    elif mode.kind == "identity":
        S = np.eye(n)
    elif mode.kind == "all_ones":
        S = np.ones((n, n))
    else:
        S = mode.matrix
        if S.shape != (n, n):
            raise ValueError(f"fixed similarity matrix is {S.shape}, assortment has {n} items")
    L = q[:, None] * S * q[None, :]
    return KernelBundle(q=q, S=S, L=L)


def psd_check(M: np.ndarray, tol: float = 1e-8) -> bool:
    """True iff M is symmetric within tol and min eigenvalue >= -tol * max(1, ||M||).

    ||M|| is the spectral norm of the symmetrized matrix. Non-square input is
    an argument error.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"psd_check requires a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.abs(M).max())) if M.size else 1.0
    if np.abs(M - M.T).max(initial=0.0) > tol * scale:
        return False
    eigs = np.linalg.eigvalsh(0.5 * (M + M.T))
    norm = max(1.0, float(np.abs(eigs).max())) if eigs.size else 1.0
    return bool(eigs.min(initial=0.0) >= -tol * norm)
