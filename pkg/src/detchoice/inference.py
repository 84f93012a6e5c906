"""MAP optimization and adaptive-Metropolis posterior sampling.

The posterior over (beta, log lengthscales) is evaluated through
:class:`PosteriorObjective`, which stacks observations of equal assortment
size into batched linear algebra. It matches the per-observation reference
path in :mod:`detchoice.likelihood` to high accuracy (tested) and makes MCMC
affordable at a few thousand observations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtri

from .data import Dataset, PriorSpec
from .exceptions import DiagnosticsError, FitError
from .kernel import ModelParams, SimilarityMode
from .likelihood import _LOG_DET_FLOOR, SubsetIndex, subset_log_likelihood
from .kernel import build_kernel
from .rng import RngState
from .sampling import spectral_sample

# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass
class FitResult:
    """A MAP point estimate with its convergence record."""

    params: object  # ModelParams for the determinantal model, ndarray for baselines
    log_posterior: float
    grad_norm: float
    iterations: int
    converged: bool
    provenance: dict = field(default_factory=dict)


@dataclass
class PosteriorChains:
    """Kept MCMC draws, shape (chains, steps, n_params)."""

    draws: np.ndarray
    acceptance_rates: np.ndarray
    warmup: int
    param_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.draws.ndim != 3:
            raise ValueError(f"draws must be (chains, steps, params), got {self.draws.shape}")
        if not np.all(np.isfinite(self.draws)):
            raise ValueError("draws must be finite")
        rates = np.asarray(self.acceptance_rates, dtype=float)
        if np.any(rates < 0) or np.any(rates > 1):
            raise ValueError("acceptance rates must lie in [0, 1]")
        object.__setattr__(self, "acceptance_rates", rates)

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_params(self) -> int:
        return self.draws.shape[2]

    def flat(self) -> np.ndarray:
        return self.draws.reshape(-1, self.n_params)


@dataclass
class Diagnostics:
    """Per-parameter rank-normalized split R-hat and bulk effective sample size."""

    ess: np.ndarray
    rhat: np.ndarray
    param_names: tuple[str, ...] = ()

    def max_rhat(self) -> float:
        return float(np.max(self.rhat))


@dataclass
class OptConfig:
    max_iter: int = 2000
    grad_tol_abs: float = 1e-5
    grad_tol_scale: float = 1e-6
    lengthscale_method: str = "fd"  # 'fd' or 'analytic'
    fd_step: float = 1e-5
    restart_offsets: tuple[float, ...] = (0.0,)  # added to the log-lengthscale init
    jitter: float = 0.0


@dataclass
class McmcConfig:
    n_chains: int = 25
    n_warmup: int = 2000
    n_steps: int = 5000
    init_jitter_scale: float = 0.25
    adapt_start: int = 100
    initial_step_scale: float = 0.1


# ---------------------------------------------------------------------------
# Stacked posterior objective
# ---------------------------------------------------------------------------


class PosteriorObjective:
    """Batched log-posterior and gradient over a fixed dataset.

    Parameters are packed as theta = concat(beta, log_lengthscales). The
    empty-selection beta term, pairwise squared feature differences, and
    chosen-pair masks are precomputed once per dataset.
    """

    def __init__(
        self,
        data: Dataset,
        priors: PriorSpec,
        mode: SimilarityMode = SimilarityMode.rbf(),
        jitter: float = 0.0,
    ):
        if len(data) == 0:
            self._empty = True
        else:
            self._empty = False
        self.data = data
        self.priors = priors
        self.mode = mode
        self.jitter = float(jitter)
        self.template = ModelParams(
            beta=np.zeros(data.n_quality_features),
            log_lengthscales=np.zeros(data.n_free_lengthscales),
            similarity_mask=data.similarity_mask,
            quality_mask=data.quality_mask,
            lengthscale_groups=data.lengthscale_groups,
        )
        if priors.n_beta != data.n_quality_features:
            raise ValueError(
                f"prior has {priors.n_beta} beta terms, data has {data.n_quality_features} quality features"
            )
        if priors.n_loglen != data.n_free_lengthscales:
            raise ValueError(
                f"prior has {priors.n_loglen} lengthscale terms, data has {data.n_free_lengthscales}"
            )
        self.n_beta = priors.n_beta
        self.n_loglen = priors.n_loglen
        self.n_params = self.n_beta + self.n_loglen
        groups = self.template.lengthscale_groups
        self._feature_group = (
            np.asarray(groups, dtype=int)
            if groups is not None
            else np.arange(len(data.similarity_mask))
        )

        self._blocks = []
        self.total_chosen_xq = np.zeros(self.n_beta)
        by_size: dict[int, list] = {}
        for obs in data.observations:
            by_size.setdefault(obs.assortment.n_items, []).append(obs)
        qcols = list(data.quality_mask) if data.quality_mask is not None else None
        scols = list(data.similarity_mask)
        for n, group in sorted(by_size.items()):
            X = np.stack([o.assortment.features for o in group])  # (m, n, d)
            Xq = X if qcols is None else X[:, :, qcols]
            Xs = X[:, :, scols]
            cmask = np.zeros((len(group), n), dtype=bool)
            for row, o in zip(cmask, group):
                row[list(o.chosen)] = True
            pair = cmask[:, :, None] & cmask[:, None, :]
            sqdiff = (Xs[:, :, None, :] - Xs[:, None, :, :]) ** 2  # (m, n, n, ds)
            self._blocks.append(
                {"n": n, "Xq": Xq, "sqdiff": sqdiff, "pair": pair.astype(float), "cmask": cmask}
            )
            self.total_chosen_xq += np.einsum("mn,mnd->d", cmask.astype(float), Xq)

    # -- packing helpers ----------------------------------------------------

    def pack(self, beta: np.ndarray, log_lengthscales: np.ndarray) -> np.ndarray:
        return np.concatenate([np.atleast_1d(beta), np.atleast_1d(log_lengthscales)])

    def unpack(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        return theta[: self.n_beta], theta[self.n_beta :]

    def params(self, theta: np.ndarray) -> ModelParams:
        beta, logl = self.unpack(theta)
        return self.template.with_theta(beta, logl)

    # -- similarity construction --------------------------------------------

    def _similarity(self, block, ell: np.ndarray) -> np.ndarray:
        n = block["n"]
        m = block["Xq"].shape[0]
        if self.mode.kind == "identity":
            return np.broadcast_to(np.eye(n), (m, n, n)).copy()
        if self.mode.kind == "all_ones":
            return np.ones((m, n, n))
        if self.mode.kind == "fixed":
            if self.mode.matrix.shape != (n, n):
                raise ValueError("fixed similarity matrix does not match assortment size")
            return np.broadcast_to(self.mode.matrix, (m, n, n)).copy()
        S = np.exp(-0.5 * (block["sqdiff"] @ (1.0 / ell**2)))
        if self.jitter > 0.0:
            S = (S + self.jitter * np.eye(n)) / (1.0 + self.jitter)
        eye = np.eye(n, dtype=bool)
        S[:, eye] = 1.0
        return S

    # -- log posterior and gradient ------------------------------------------

    def log_posterior(self, theta: np.ndarray) -> float:
        beta, logl = self.unpack(theta)
        total = self.priors.log_density(beta, logl)
        if self._empty:
            return float(total)
        ell = np.exp(logl[self._feature_group]) if self._feature_group.size else np.zeros(0)
        total += float(beta @ self.total_chosen_xq)
        for block in self._blocks:
            n = block["n"]
            exponents = block["Xq"] @ beta
            if np.max(exponents) > 700.0:
                # kernel entries would overflow float64; treat as out of support
                return -np.inf
            S = self._similarity(block, ell)
            q = np.exp(0.5 * exponents)
            L = q[:, :, None] * S * q[:, None, :]
            A = L + np.eye(n)
            try:
                chol = np.linalg.cholesky(A)
            except np.linalg.LinAlgError:
                return -np.inf
            lnorm = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)))
            pair = block["pair"]
            Mpad = S * pair + np.eye(n) * (1.0 - pair)
            sign, logdet = np.linalg.slogdet(Mpad)
            if np.any(sign <= 0) or np.any(logdet <= _LOG_DET_FLOOR):
                return -np.inf
            total += float(np.sum(logdet) - lnorm)
        return float(total)

    def grad(self, theta: np.ndarray, analytic_lengthscales: bool = True) -> np.ndarray:
        lp = self.log_posterior(theta)
        if not np.isfinite(lp):
            raise ValueError("gradient requested at a point with -inf log posterior")
        beta, logl = self.unpack(theta)
        gb, gl = self.priors.grad_log_density(beta, logl)
        if self._empty:
            return np.concatenate([gb, gl])
        ell = np.exp(logl[self._feature_group]) if self._feature_group.size else np.zeros(0)

        grad_beta = gb + self.total_chosen_xq
        per_feature = np.zeros(self._feature_group.size)
        analytic_ell = analytic_lengthscales and self.mode.kind == "rbf" and self.n_loglen > 0
        for block in self._blocks:
            n = block["n"]
            S = self._similarity(block, ell)
            q = np.exp(0.5 * (block["Xq"] @ beta))
            L = q[:, :, None] * S * q[:, None, :]
            Ainv = np.linalg.inv(L + np.eye(n))
            k_diag = 1.0 - np.diagonal(Ainv, axis1=1, axis2=2)
            grad_beta -= np.einsum("mn,mnd->d", k_diag, block["Xq"])
            if analytic_ell:
                pair = block["pair"]
                Mpad = S * pair + np.eye(n) * (1.0 - pair)
                Minv = np.linalg.inv(Mpad)
                for k in range(per_feature.size):
                    W = block["sqdiff"][:, :, :, k] / ell[k] ** 2
                    dS = S * W
                    dL = q[:, :, None] * dS * q[:, None, :]
                    per_feature[k] += float(np.sum(Minv * (dS * pair)) - np.sum(Ainv * dL))

        if self.n_loglen == 0:
            return grad_beta

        grad_ell = gl.copy()
        if analytic_ell:
            np.add.at(grad_ell, self._feature_group, per_feature)
        # non-rbf modes: similarity is lengthscale-free, prior term only
        return np.concatenate([grad_beta, grad_ell])

    def grad_fd_lengthscales(self, theta: np.ndarray, fd_step: float = 1e-5) -> np.ndarray:
        """Central finite differences of the log posterior over the log-l block.

        Falls back to a one-sided difference when one side of the stencil
        leaves the model's support (the point itself must be interior).
        """
        beta, logl = self.unpack(theta)
        lp0 = None
        out = np.empty(self.n_loglen)
        for k in range(self.n_loglen):
            h = fd_step * max(1.0, abs(logl[k]))
            up, dn = logl.copy(), logl.copy()
            up[k] += h
            dn[k] -= h
            lp_up = self.log_posterior(self.pack(beta, up))
            lp_dn = self.log_posterior(self.pack(beta, dn))
            if np.isfinite(lp_up) and np.isfinite(lp_dn):
                out[k] = (lp_up - lp_dn) / (2 * h)
                continue
            if lp0 is None:
                lp0 = self.log_posterior(theta)
            if np.isfinite(lp_up):
                out[k] = (lp_up - lp0) / h
            elif np.isfinite(lp_dn):
                out[k] = (lp0 - lp_dn) / h
            else:
                raise ValueError("finite-difference stencil left the model's support")
        return out

    def grad_full(self, theta: np.ndarray, lengthscale_method: str = "fd", fd_step: float = 1e-5) -> np.ndarray:
        """Analytic beta block; lengthscale block per ``lengthscale_method``."""
        if lengthscale_method == "analytic" or self.n_loglen == 0 or self.mode.kind != "rbf":
            return self.grad(theta)
        if lengthscale_method != "fd":
            raise ValueError(f"unknown lengthscale_method {lengthscale_method!r}")
        g = self.grad(theta, analytic_lengthscales=False)
        g[self.n_beta :] = self.grad_fd_lengthscales(theta, fd_step=fd_step)
        return g


# ---------------------------------------------------------------------------
# MAP fitting
# ---------------------------------------------------------------------------


def _finite_init(objective: PosteriorObjective, theta0: np.ndarray) -> np.ndarray:
    """Jitter lengthscales upward until the log posterior is finite."""
    theta = theta0.copy()
    for _ in range(40):
        if np.isfinite(objective.log_posterior(theta)):
            return theta
        if objective.n_loglen == 0:
            break
        theta[objective.n_beta :] += 0.5
    raise FitError(_describe_support_failure(objective, theta0))


def _describe_support_failure(objective: PosteriorObjective, theta: np.ndarray) -> str:
    params = objective.params(theta)
    for obs in objective.data.observations:
        bundle = build_kernel(params, obs.assortment, objective.mode)
        if subset_log_likelihood(bundle, obs.chosen) == -np.inf:
            return (
                f"observation {obs.id!r} has zero likelihood under the model for every "
                "tried initializer (selection incompatible with the similarity structure)"
            )
    return "log posterior is -inf at every tried initializer"


def map_fit(
    data: Dataset,
    priors: PriorSpec,
    config: OptConfig = OptConfig(),
    mode: SimilarityMode = SimilarityMode.rbf(),
    init: np.ndarray | None = None,
    objective: PosteriorObjective | None = None,
) -> FitResult:
    """Quasi-Newton MAP estimate of (beta, log lengthscales).

    Ascends the log posterior with L-BFGS-B (analytic beta gradient, finite
    differences over the lengthscales by default). A fit is reported converged
    when the sup-norm gradient is at or below
    min(1e-6 * max(1, |log posterior|), 1e-5).
    """
    if len(data) == 0:
        raise ValueError("map_fit requires a nonempty dataset")
    obj = objective if objective is not None else PosteriorObjective(data, priors, mode, config.jitter)

    if init is not None:
        base = np.asarray(init, dtype=float).copy()
        if base.shape != (obj.n_params,):
            raise ValueError(f"init must have shape ({obj.n_params},)")
    else:
        base = obj.pack(np.zeros(obj.n_beta), obj.priors.loglen_mean.copy())

    def negative(theta):
        lp = obj.log_posterior(theta)
        return np.inf if not np.isfinite(lp) else -lp

    def negative_grad(theta):
        lp = obj.log_posterior(theta)
        if not np.isfinite(lp):
            return np.zeros(obj.n_params)
        return -obj.grad_full(theta, config.lengthscale_method, config.fd_step)

    best = None
    total_iters = 0
    for offset in config.restart_offsets:
        theta0 = base.copy()
        theta0[obj.n_beta :] += offset
        theta0 = _finite_init(obj, theta0)
        res = minimize(
            negative,
            theta0,
            jac=negative_grad,
            method="L-BFGS-B",
            options={"maxiter": config.max_iter, "ftol": 1e-14, "gtol": 1e-9, "maxls": 60},
        )
        total_iters += int(res.nit)
        if best is None or -res.fun > -best.fun:
            best = res

    theta_hat = np.asarray(best.x, dtype=float)
    lp_hat = obj.log_posterior(theta_hat)
    grad_hat = obj.grad_full(theta_hat, config.lengthscale_method, config.fd_step)
    grad_norm = float(np.abs(grad_hat).max(initial=0.0))
    tol = min(config.grad_tol_scale * max(1.0, abs(lp_hat)), config.grad_tol_abs)
    return FitResult(
        params=obj.params(theta_hat),
        log_posterior=float(lp_hat),
        grad_norm=grad_norm,
        iterations=total_iters,
        converged=bool(grad_norm <= tol),
        provenance={
            "optimizer": "L-BFGS-B",
            "mode": mode.kind,
            "restart_offsets": list(config.restart_offsets),
            "lengthscale_method": config.lengthscale_method,
            "grad_tolerance": tol,
            "n_observations": len(data),
        },
    )


# ---------------------------------------------------------------------------
# Adaptive random-walk Metropolis
# ---------------------------------------------------------------------------


def adaptive_mh(
    data: Dataset,
    priors: PriorSpec,
    config: McmcConfig = McmcConfig(),
    rng: RngState | int = 0,
    mode: SimilarityMode = SimilarityMode.rbf(),
    start: np.ndarray | None = None,
    objective: PosteriorObjective | None = None,
) -> PosteriorChains:
    """Random-walk Metropolis with warmup-only covariance adaptation.

    During warmup the proposal covariance tracks the running sample covariance
    scaled by 2.38^2/dim; it is frozen afterwards so the kept chain is
    Markovian. Chains start overdispersed around the MAP (or ``start``).
    """
    rng = rng if isinstance(rng, RngState) else RngState(int(rng))
    obj = objective if objective is not None else PosteriorObjective(data, priors, mode)
    dim = obj.n_params
    if start is None:
        if len(data) == 0:
            start = obj.pack(priors.beta_mean.copy(), priors.loglen_mean.copy())
        else:
            start = map_fit(data, priors, OptConfig(), mode, objective=obj)
            start = obj.pack(start.params.beta, start.params.log_lengthscales)
    start = np.asarray(start, dtype=float)

    prior_sd = np.concatenate([priors.beta_sd, priors.loglen_sd])
    scale = 2.38**2 / dim
    draws = np.empty((config.n_chains, config.n_steps, dim))
    acc_rates = np.empty(config.n_chains)

    for c in range(config.n_chains):
        gen = rng.split(c).generator()
        theta = None
        for _ in range(100):
            candidate = start + config.init_jitter_scale * prior_sd * gen.standard_normal(dim)
            if np.isfinite(obj.log_posterior(candidate)):
                theta = candidate
                break
        if theta is None:
            raise FitError(f"chain {c}: no finite-posterior initial point found near the start")
        lp = obj.log_posterior(theta)

        mean = theta.copy()
        cov = np.zeros((dim, dim))
        count = 1
        prop_chol = np.diag(config.initial_step_scale * prior_sd)
        warm_accepts = 0
        for t in range(config.n_warmup):
            prop = theta + prop_chol @ gen.standard_normal(dim)
            lp_prop = obj.log_posterior(prop)
            if np.log(gen.random()) < lp_prop - lp:
                theta, lp = prop, lp_prop
                warm_accepts += 1
            # Welford update of the running mean/covariance
            count += 1
            delta = theta - mean
            mean += delta / count
            cov += np.outer(delta, theta - mean)
            if t + 1 >= config.adapt_start:
                sample_cov = cov / (count - 1)
                prop_chol = np.linalg.cholesky(
                    scale * (sample_cov + 1e-10 * np.eye(dim))
                )
        if config.n_warmup > 0 and warm_accepts == 0:
            raise FitError(
                f"chain {c}: zero acceptance across {config.n_warmup} warmup steps "
                f"(last log posterior {lp:.3g}); proposal scale likely too large"
            )

        accepts = 0
        for t in range(config.n_steps):
            prop = theta + prop_chol @ gen.standard_normal(dim)
            lp_prop = obj.log_posterior(prop)
            if np.log(gen.random()) < lp_prop - lp:
                theta, lp = prop, lp_prop
                accepts += 1
            draws[c, t] = theta
        acc_rates[c] = accepts / max(config.n_steps, 1)

    names = tuple(f"beta[{i}]" for i in range(obj.n_beta)) + tuple(
        f"log_len[{i}]" for i in range(obj.n_loglen)
    )
    return PosteriorChains(
        draws=draws, acceptance_rates=acc_rates, warmup=config.n_warmup, param_names=names
    )


# ---------------------------------------------------------------------------
# Convergence diagnostics
# ---------------------------------------------------------------------------


def _rank_normalize(x: np.ndarray) -> np.ndarray:
    """Fractional ranks mapped through the standard normal quantile function."""
    flat = x.reshape(-1)
    order = np.argsort(flat, kind="stable")
    ranks = np.empty_like(flat)
    ranks[order] = np.arange(1, flat.size + 1, dtype=float)
    # average ties
    uniq, inv, counts = np.unique(flat, return_inverse=True, return_counts=True)
    if uniq.size != flat.size:
        sums = np.zeros(uniq.size)
        np.add.at(sums, inv, ranks)
        ranks = (sums / counts)[inv]
    z = ndtri((ranks - 3.0 / 8.0) / (flat.size + 0.25))
    return z.reshape(x.shape)


def _split_chains(chains: np.ndarray) -> np.ndarray:
    m, n = chains.shape
    half = n // 2
    return np.concatenate([chains[:, :half], chains[:, half : 2 * half]], axis=0)


def _rhat_ess_1d(sequences: np.ndarray) -> tuple[float, float]:
    """(split R-hat, bulk ESS) for one parameter's rank-normalized sequences."""
    m, n = sequences.shape
    within = sequences.var(axis=1, ddof=1).mean()
    if within == 0 or not np.isfinite(within):
        return np.inf, 0.0
    between = n * sequences.mean(axis=1).var(ddof=1)
    var_plus = (n - 1) / n * within + between / n
    rhat = float(np.sqrt(var_plus / within))

    centered = sequences - sequences.mean(axis=1, keepdims=True)
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(centered, n=size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), n=size, axis=1)[:, :n].real / n
    rho = 1.0 - (within - acov.mean(axis=0)) / var_plus

    # Geyer initial positive, then monotone, pair sums
    tau = 0.0
    prev_pair = np.inf
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        pair = min(pair, prev_pair)
        tau += pair
        prev_pair = pair
        t += 2
    tau = max(-1.0 + 2.0 * tau, 1e-12)
    ess = float(m * n / tau)
    return rhat, ess


def diagnostics(chains: PosteriorChains) -> Diagnostics:
    """Rank-normalized split R-hat and bulk ESS per parameter.

    Degenerate (constant) chains report R-hat of +inf and zero ESS.
    """
    draws = chains.draws
    if draws.shape[0] < 2:
        raise ValueError("diagnostics require at least 2 chains")
    if draws.shape[1] < 100:
        raise ValueError("diagnostics require at least 100 kept steps per chain")
    n_params = draws.shape[2]
    rhat = np.empty(n_params)
    ess = np.empty(n_params)
    for p in range(n_params):
        split = _split_chains(draws[:, :, p])
        if np.ptp(split) == 0:
            rhat[p], ess[p] = np.inf, 0.0
            continue
        z = _rank_normalize(split)
        rhat[p], ess[p] = _rhat_ess_1d(z)
    return Diagnostics(ess=ess, rhat=rhat, param_names=chains.param_names)


# ---------------------------------------------------------------------------
# Posterior-predictive sampling
# ---------------------------------------------------------------------------


def posterior_predict(
    data_eval: Dataset,
    chains: PosteriorChains,
    rng: RngState | int,
    n_draws: int,
    mode: SimilarityMode = SimilarityMode.rbf(),
    rhat_gate: float = 1.05,
    allow_unconverged: bool = False,
) -> list[tuple[str, SubsetIndex]]:
    """Sample predicted subsets for each evaluation observation.

    For each of ``n_draws`` parameter draws (uniform over kept posterior
    draws) every observation gets one subset sampled from the induced kernel.
    Results are returned draw-major as (observation id, subset) pairs.
    """
    diag = diagnostics(chains)
    if diag.max_rhat() > rhat_gate and not allow_unconverged:
        raise DiagnosticsError(
            f"max split R-hat {diag.max_rhat():.4f} exceeds the gate {rhat_gate}; "
            "pass allow_unconverged=True to override"
        )
    rng = rng if isinstance(rng, RngState) else RngState(int(rng))
    gen = rng.generator()
    template = ModelParams(
        beta=np.zeros(data_eval.n_quality_features),
        log_lengthscales=np.zeros(data_eval.n_free_lengthscales),
        similarity_mask=data_eval.similarity_mask,
        quality_mask=data_eval.quality_mask,
        lengthscale_groups=data_eval.lengthscale_groups,
    )
    n_beta = data_eval.n_quality_features
    flat = chains.flat()
    out: list[tuple[str, SubsetIndex]] = []
    for _ in range(n_draws):
        theta = flat[int(gen.integers(flat.shape[0]))]
        params = template.with_theta(theta[:n_beta], theta[n_beta:])
        for obs in data_eval.observations:
            bundle = build_kernel(params, obs.assortment, mode)
            out.append((obs.id, spectral_sample(bundle.L, gen)))
    return out
