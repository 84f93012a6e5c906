"""Logistic-regression and MNL reference models.

Both share the determinantal model's quality features and Gaussian prior on
beta. Logistic regression treats each item's inclusion as an independent
Bernoulli; MNL selects at most one item (the empty choice has utility zero).
These models double as closed-form oracles for the identity-similarity and
all-ones-similarity limits of the determinantal model.

All likelihoods are written in log1p / logsumexp form; no raw exponential
sums, so linear predictors up to about 700 stay finite.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .data import Dataset, PriorSpec
from .exceptions import DataError, FitError
from .kernel import Assortment
from .likelihood import SubsetIndex, as_subset
from .rng import as_generator

BASELINE_MODELS = ("logistic", "mnl")


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _log_sigmoid(z):
    # log sigma(z) = -softplus(-z)
    return -np.logaddexp(0.0, -np.asarray(z, dtype=float))


def logistic_log_likelihood(beta: np.ndarray, assortment: Assortment, chosen) -> float:
    """Independent-Bernoulli log-likelihood of a chosen subset."""
    C = as_subset(chosen, assortment.n_items)
    z = assortment.features @ np.asarray(beta, dtype=float)
    y = np.zeros(assortment.n_items, dtype=bool)
    y[list(C)] = True
    return float(np.sum(_log_sigmoid(z[y])) + np.sum(_log_sigmoid(-z[~y])))


def mnl_log_likelihood(beta: np.ndarray, assortment: Assortment, choice) -> float:
    """MNL log-likelihood; -inf for choices of two or more items.

    P({i}) = exp(beta.x_i) / (1 + sum_j exp(beta.x_j)) and the empty choice
    takes the 1 in the numerator.
    """
    C = as_subset(choice, assortment.n_items)
    if len(C) >= 2:
        return -np.inf
    z = assortment.features @ np.asarray(beta, dtype=float)
    log_denom = logsumexp(np.concatenate([[0.0], z]))
    if not C:
        return float(-log_denom)
    return float(z[C[0]] - log_denom)


def _quality_view(data: Dataset) -> list[np.ndarray]:
    cols = list(data.quality_mask) if data.quality_mask is not None else None
    out = []
    for obs in data.observations:
        X = obs.assortment.features
        out.append(X if cols is None else X[:, cols])
    return out


def _expand_multi_item(data: Dataset, multi_item: str) -> list[tuple[np.ndarray, SubsetIndex]]:
    """Per-observation (features, choice) pairs for MNL training.

    ``multi_item='reject'`` raises on any selection of size >= 2;
    ``'expand'`` contributes each chosen item of such selections as an
    independent singleton choice over the same assortment.
    """
    pairs: list[tuple[np.ndarray, SubsetIndex]] = []
    for X, obs in zip(_quality_view(data), data.observations):
        if len(obs.chosen) <= 1:
            pairs.append((X, obs.chosen))
        elif multi_item == "expand":
            pairs.extend((X, (i,)) for i in obs.chosen)
        else:
            raise DataError(
                f"observation {obs.id!r} selects {len(obs.chosen)} items; MNL requires "
                "size <= 1 (pass multi_item='expand' to train on singleton expansions)"
            )
    return pairs


def _logistic_objective(data: Dataset, priors: PriorSpec):
    X = np.concatenate(_quality_view(data), axis=0)
    y = np.concatenate([obs.labels for obs in data.observations]).astype(float)

    def negative(beta):
        z = X @ beta
        ll = float(np.sum(y * _log_sigmoid(z) + (1.0 - y) * _log_sigmoid(-z)))
        return -(ll + priors.beta_log_density(beta))

    def grad(beta):
        z = X @ beta
        score = (y - sigmoid(z)) @ X
        return -(score + priors.beta_grad_log_density(beta))

    return negative, grad


def _mnl_objective(pairs, priors: PriorSpec):
    def negative(beta):
        total = priors.beta_log_density(beta)
        for X, choice in pairs:
            z = X @ beta
            log_denom = logsumexp(np.concatenate([[0.0], z]))
            total += (z[choice[0]] if choice else 0.0) - log_denom
        return -total

    def grad(beta):
        total = priors.beta_grad_log_density(beta).copy()
        for X, choice in pairs:
            z = X @ beta
            w = np.exp(z - logsumexp(np.concatenate([[0.0], z])))
            total += (X[choice[0]] if choice else 0.0) - w @ X
        return -total

    return negative, grad


def fit_baseline(
    model: str,
    data: Dataset,
    priors: PriorSpec,
    max_iter: int = 2000,
    grad_tol: float = 1e-7,
    multi_item: str = "reject",
):
    """MAP-fit a baseline model; returns a FitResult.

    The prior must cover exactly the quality features (no lengthscale block is
    used). Non-finite likelihood at the zero initializer is a fit error.
    """
    from .inference import FitResult  # deferred: inference also imports nothing from here

    if model not in BASELINE_MODELS:
        raise ValueError(f"model must be one of {BASELINE_MODELS}, got {model!r}")
    if priors.n_beta != data.n_quality_features:
        raise ValueError(
            f"prior covers {priors.n_beta} coefficients, data has {data.n_quality_features} quality features"
        )
    if model == "logistic":
        negative, grad = _logistic_objective(data, priors)
    else:
        pairs = _expand_multi_item(data, multi_item)
        negative, grad = _mnl_objective(pairs, priors)

    beta0 = np.zeros(priors.n_beta)
    f0 = negative(beta0)
    if not np.isfinite(f0):
        raise FitError("baseline likelihood is not finite at the zero initializer")

    res = minimize(
        negative,
        beta0,
        jac=grad,
        method="L-BFGS-B",
        options={"maxiter": max_iter, "ftol": 1e-14, "gtol": 1e-10},
    )
    g = grad(res.x)
    grad_norm = float(np.abs(g).max(initial=0.0))
    params = np.asarray(res.x, dtype=float)
    return FitResult(
        params=params,
        log_posterior=-float(res.fun),
        grad_norm=grad_norm,
        iterations=int(res.nit),
        converged=bool(grad_norm <= grad_tol),
        provenance={
            "model": model,
            "multi_item": multi_item if model == "mnl" else None,
            "optimizer": "L-BFGS-B",
            "max_iter": max_iter,
            "grad_tol": grad_tol,
        },
    )


def baseline_predict(model: str, beta: np.ndarray, assortment: Assortment, rng) -> SubsetIndex:
    """Sample one predicted subset.

    Logistic draws independent Bernoulli labels per item; MNL draws a single
    categorical outcome over the empty choice and the items (so always at
    most one item).
    """
    gen = as_generator(rng)
    beta = np.asarray(beta, dtype=float)
    z = assortment.features @ beta
    if model == "logistic":
        picks = np.nonzero(gen.random(assortment.n_items) < sigmoid(z))[0]
        return tuple(int(i) for i in picks)
    if model == "mnl":
        logits = np.concatenate([[0.0], z])
        p = np.exp(logits - logsumexp(logits))
        k = int(np.searchsorted(np.cumsum(p), gen.random() * p.sum(), side="right"))
        return () if k == 0 else (k - 1,)
    raise ValueError(f"model must be one of {BASELINE_MODELS}, got {model!r}")
