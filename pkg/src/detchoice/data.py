"""Choice datasets, feature standardization, and priors."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .kernel import Assortment


@dataclass(frozen=True)
class Observation:
    """One assortment-selection pair."""

    id: str
    assortment: Assortment
    chosen: tuple[int, ...]

    def __post_init__(self):
        chosen = tuple(int(i) for i in self.chosen)
        n = self.assortment.n_items
        if list(chosen) != sorted(set(chosen)):
            raise ValueError(f"chosen indices must be sorted and unique, got {chosen}")
        if chosen and (chosen[0] < 0 or chosen[-1] >= n):
            raise ValueError(f"chosen indices out of range for {n} items: {chosen}")
        object.__setattr__(self, "chosen", chosen)

    @property
    def labels(self) -> np.ndarray:
        """Boolean selection vector aligned with the assortment's item order."""
        y = np.zeros(self.assortment.n_items, dtype=bool)
        y[list(self.chosen)] = True
        return y


@dataclass(frozen=True)
class Standardization:
    """Per-feature affine transform x -> (x - mean) / sd.

    Dimensions not selected for standardization keep mean 0 and sd 1; constant
    columns among the selected dimensions also fall back to (0, 1) so the
    transform stays invertible.
    """

    mean: np.ndarray
    sd: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        sd = np.asarray(self.sd, dtype=float)
        if mean.shape != sd.shape or mean.ndim != 1:
            raise ValueError("mean and sd must be 1-d arrays of equal length")
        if np.any(sd <= 0):
            raise ValueError("sd entries must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "sd", sd)

    @classmethod
    def fit(cls, dataset: "Dataset", feature_indices: tuple[int, ...] | None = None) -> "Standardization":
        """Estimate constants from (training) data over the given dimensions."""
        d = dataset.n_features
        idx = dataset.standardize_features if feature_indices is None else tuple(feature_indices)
        mean = np.zeros(d)
        sd = np.ones(d)
        if idx:
            X = np.concatenate(
                [obs.assortment.features for obs in dataset.observations], axis=0
            )
            cols = list(idx)
            mu = X[:, cols].mean(axis=0)
            sigma = X[:, cols].std(axis=0)
            keep = sigma > 1e-12
            mean[cols] = np.where(keep, mu, 0.0)
            sd[cols] = np.where(keep, sigma, 1.0)
        return cls(mean=mean, sd=sd)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.sd

    def apply(self, dataset: "Dataset") -> "Dataset":
        """Return a copy of the dataset with features in standardized units."""
        obs = [
            Observation(
                id=o.id,
                assortment=Assortment(self.transform(o.assortment.features), o.assortment.ids),
                chosen=o.chosen,
            )
            for o in dataset.observations
        ]
        return replace(dataset, observations=obs, standardization=self)


@dataclass(frozen=True)
class Dataset:
    """A sequence of observations sharing one feature schema.

    ``similarity_mask`` / ``quality_mask`` / ``lengthscale_groups`` describe
    the model parametrization this data was built for; ``standardize_features``
    lists the dimensions a fit should standardize (constants are estimated on
    training data and carried in the fit artifact, not in the dataset).
    """

    observations: list[Observation] = field(default_factory=list)
    feature_names: tuple[str, ...] = ()
    similarity_mask: tuple[int, ...] = ()
    quality_mask: tuple[int, ...] | None = None
    lengthscale_groups: tuple[int, ...] | None = None
    standardize_features: tuple[int, ...] = ()
    standardization: Standardization | None = None

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "similarity_mask", tuple(int(i) for i in self.similarity_mask))
        if self.quality_mask is not None:
            object.__setattr__(self, "quality_mask", tuple(int(i) for i in self.quality_mask))
        if self.lengthscale_groups is not None:
            object.__setattr__(
                self, "lengthscale_groups", tuple(int(g) for g in self.lengthscale_groups)
            )
        object.__setattr__(
            self, "standardize_features", tuple(int(i) for i in self.standardize_features)
        )
        d = self.n_features
        for o in self.observations:
            if o.assortment.n_features != d:
                raise ValueError(
                    f"observation {o.id!r} has {o.assortment.n_features} features, expected {d}"
                )
        for m in (self.similarity_mask, self.quality_mask or (), self.standardize_features):
            if any(i < 0 or i >= d for i in m):
                raise ValueError(f"feature mask {m} out of range for {d} features")

    @property
    def n_features(self) -> int:
        if self.feature_names:
            return len(self.feature_names)
        if self.observations:
            return self.observations[0].assortment.n_features
        return 0

    @property
    def n_quality_features(self) -> int:
        return len(self.quality_mask) if self.quality_mask is not None else self.n_features

    @property
    def n_free_lengthscales(self) -> int:
        if self.lengthscale_groups is not None:
            return max(self.lengthscale_groups) + 1 if self.lengthscale_groups else 0
        return len(self.similarity_mask)

    def __len__(self) -> int:
        return len(self.observations)


@dataclass(frozen=True)
class PriorSpec:
    """Independent Gaussian priors on beta and on the free log-lengthscales."""

    beta_mean: np.ndarray
    beta_sd: np.ndarray
    loglen_mean: np.ndarray
    loglen_sd: np.ndarray

    def __post_init__(self):
        for name in ("beta_mean", "beta_sd", "loglen_mean", "loglen_sd"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arr)
        if self.beta_mean.shape != self.beta_sd.shape:
            raise ValueError("beta_mean and beta_sd shapes differ")
        if self.loglen_mean.shape != self.loglen_sd.shape:
            raise ValueError("loglen_mean and loglen_sd shapes differ")
        if np.any(self.beta_sd <= 0) or np.any(self.loglen_sd <= 0):
            raise ValueError("prior standard deviations must be strictly positive")

    @classmethod
    def default(
        cls,
        n_beta: int,
        n_loglen: int,
        beta_sd: float = 2.0,
        loglen_sd: float = 1.0,
    ) -> "PriorSpec":
        """Zero-mean priors: beta ~ N(0, beta_sd^2), log l ~ N(0, loglen_sd^2)."""
        return cls(
            beta_mean=np.zeros(n_beta),
            beta_sd=np.full(n_beta, float(beta_sd)),
            loglen_mean=np.zeros(n_loglen),
            loglen_sd=np.full(n_loglen, float(loglen_sd)),
        )

    @property
    def n_beta(self) -> int:
        return self.beta_mean.shape[0]

    @property
    def n_loglen(self) -> int:
        return self.loglen_mean.shape[0]

    def log_density(self, beta: np.ndarray, log_lengthscales: np.ndarray) -> float:
        """Joint normalized Gaussian log-density."""
        total = 0.0
        for x, mu, sd in (
            (np.atleast_1d(beta), self.beta_mean, self.beta_sd),
            (np.atleast_1d(log_lengthscales), self.loglen_mean, self.loglen_sd),
        ):
            if x.shape != mu.shape:
                raise ValueError(f"parameter block shape {x.shape} does not match prior {mu.shape}")
            z = (x - mu) / sd
            total += float(-0.5 * np.sum(z * z) - np.sum(np.log(sd)) - 0.5 * x.size * np.log(2 * np.pi))
        return total

    def beta_log_density(self, beta: np.ndarray) -> float:
        """Log-density of the beta block alone (baselines share this prior)."""
        x = np.atleast_1d(np.asarray(beta, dtype=float))
        if x.shape != self.beta_mean.shape:
            raise ValueError(f"beta shape {x.shape} does not match prior {self.beta_mean.shape}")
        z = (x - self.beta_mean) / self.beta_sd
        return float(
            -0.5 * np.sum(z * z) - np.sum(np.log(self.beta_sd)) - 0.5 * x.size * np.log(2 * np.pi)
        )

    def beta_grad_log_density(self, beta: np.ndarray) -> np.ndarray:
        return -(np.atleast_1d(beta) - self.beta_mean) / self.beta_sd**2

    def grad_log_density(
        self, beta: np.ndarray, log_lengthscales: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        gb = -(np.atleast_1d(beta) - self.beta_mean) / self.beta_sd**2
        gl = -(np.atleast_1d(log_lengthscales) - self.loglen_mean) / self.loglen_sd**2
        return gb, gl

    def sample(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        beta = rng.normal(self.beta_mean, self.beta_sd)
        logl = rng.normal(self.loglen_mean, self.loglen_sd)
        return beta, logl
