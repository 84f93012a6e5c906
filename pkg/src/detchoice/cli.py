"""Command-line surface.

Every command writes its outputs plus a RunManifest into ``--out``; replaying
a manifest re-runs the recorded configuration and must reproduce every output
byte for byte. Exit codes: 0 success, 1 I/O or data problem, 2 usage error,
3 verification failure.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .data import PriorSpec, Standardization
from .dataio import (
    params_from_dict,
    params_to_dict,
    read_dataset,
    read_fit_artifact,
    write_dataset,
    write_fit_artifact,
)
from .evaluation import (
    determinantal_source,
    evaluate_model,
    posterior_source,
    run_sweep_experiment,
)
from .exceptions import DataError, DiagnosticsError, FitError
from .inference import (
    McmcConfig,
    OptConfig,
    PosteriorChains,
    adaptive_mh,
    diagnostics,
    map_fit,
)
from .kernel import SimilarityMode
from .manifest import RunManifest
from .rng import RngState
from .simulation import (
    CHANNELS,
    SPREADING_FACTORS,
    LoraGenConfig,
    SpatialConfig,
    gen_lora_dataset,
    gen_spatial_dataset,
)
from .verify import run_all

DEFAULT_SEED_ENV = "DETCHOICE_SEED"

EXIT_DATA = 1
EXIT_USAGE = 2
EXIT_VERIFY = 3


def _default_seed() -> int:
    raw = os.environ.get(DEFAULT_SEED_ENV)
    return int(raw) if raw else 0


def _fail(message: str, code: int = EXIT_DATA):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _prepare_out(out) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(out_dir: Path, command: str, config: dict, seed: int, inputs=(), outputs=()) -> None:
    manifest = RunManifest(command=command, config=config, seed=seed, version=__version__)
    for p in inputs:
        manifest.record_input(p)
    for p in outputs:
        manifest.record_output(p)
    manifest.write(out_dir)


@click.group()
@click.version_option(version=__version__)
def main():
    """Determinantal subset-choice modeling toolkit."""


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _run_simulate(config: dict, out_dir: Path) -> list[Path]:
    seed = config["seed"]
    rng = RngState(seed)
    if config["dgp"] == "spatial":
        cfg = SpatialConfig(
            n_items=config["n_items"],
            square_half_width=config["half_width"],
            gamma0=config["gamma0"],
            gamma1=config["gamma1"],
            radius=config["radius"],
            include_constant=config["include_constant"],
        )
        dataset = gen_spatial_dataset(cfg, config["n_obs"], rng)
    else:
        cfg = LoraGenConfig(
            n_devices=config["k"],
            d_max=config["dmax"],
            channel_subset=tuple(config["channels"]),
            sf_subset=tuple(config["sfs"]),
            relative_delay_offset=config["offset"],
        )
        dataset = gen_lora_dataset(cfg, config["n_obs"], rng, rule=config["rule"])
    path = out_dir / "dataset.jsonl"
    write_dataset(dataset, path)
    return [path]


@main.command()
@click.option("--dgp", type=click.Choice(["spatial", "lora"]), required=True)
@click.option("--n-obs", type=int, required=True)
@click.option("--seed", type=int, default=None, help=f"defaults to ${DEFAULT_SEED_ENV} or 0")
@click.option("--out", type=click.Path(), required=True)
@click.option("--radius", type=float, default=0.5, show_default=True)
@click.option("--n-items", type=int, default=15, show_default=True)
@click.option("--half-width", type=float, default=2.0, show_default=True)
@click.option("--gamma0", type=float, default=-5.0, show_default=True)
@click.option("--gamma1", type=float, default=2.5, show_default=True)
@click.option("--no-constant", is_flag=True, help="omit the constant feature column (spatial)")
@click.option("--k", type=int, default=9, show_default=True, help="active devices (lora)")
@click.option("--dmax", type=float, default=600.0, show_default=True, help="max delay ms (lora)")
@click.option("--channels", default=",".join(map(str, CHANNELS)), show_default=True)
@click.option("--sfs", default=",".join(map(str, SPREADING_FACTORS)), show_default=True)
@click.option("--offset", type=float, default=100.0, show_default=True, help="relative-delay offset")
@click.option("--rule", type=click.Choice(["first_lock"]), default="first_lock", show_default=True)
def simulate(dgp, n_obs, seed, out, radius, n_items, half_width, gamma0, gamma1, no_constant, k, dmax, channels, sfs, offset, rule):
    """Generate a synthetic dataset (JSONL) plus its run manifest."""
    if n_obs < 0:
        raise click.UsageError("--n-obs must be nonnegative")
    seed = _default_seed() if seed is None else seed
    config = {
        "dgp": dgp,
        "n_obs": n_obs,
        "seed": seed,
        "radius": radius,
        "n_items": n_items,
        "half_width": half_width,
        "gamma0": gamma0,
        "gamma1": gamma1,
        "include_constant": not no_constant,
        "k": k,
        "dmax": dmax,
        "channels": [int(c) for c in str(channels).split(",") if c],
        "sfs": [int(s) for s in str(sfs).split(",") if s],
        "offset": offset,
        "rule": rule,
    }
    try:
        out_dir = _prepare_out(out)
        outputs = _run_simulate(config, out_dir)
        _write_manifest(out_dir, "simulate", config, seed, outputs=outputs)
    except (DataError, ValueError) as exc:
        _fail(str(exc), EXIT_USAGE if isinstance(exc, ValueError) and not isinstance(exc, DataError) else EXIT_DATA)
    except OSError as exc:
        _fail(str(exc))
    click.echo(f"wrote {out_dir / 'dataset.jsonl'} ({n_obs} observations)")


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _load_standardized(data_path, artifact: dict | None = None):
    dataset = read_dataset(data_path)
    if artifact is not None:
        names = artifact["feature_names"]
        if list(dataset.feature_names) != list(names):
            raise DataError(
                "feature schema mismatch between fit artifact and dataset: "
                f"fit has {names}, data has {list(dataset.feature_names)}"
            )
        std = Standardization(
            mean=np.asarray(artifact["standardization"]["mean"], dtype=float),
            sd=np.asarray(artifact["standardization"]["sd"], dtype=float),
        )
    else:
        std = Standardization.fit(dataset)
    return std.apply(dataset), std


def _summarize_map(fit, names) -> str:
    lines = ["parameter            estimate", "-" * 32]
    theta = np.concatenate([fit.params.beta, fit.params.log_lengthscales])
    for name, value in zip(names, theta):
        lines.append(f"{name:<20s} {value: .4f}")
    lines.append("")
    lines.append(f"log posterior  {fit.log_posterior:.6f}")
    lines.append(f"grad norm      {fit.grad_norm:.3e}")
    lines.append(f"iterations     {fit.iterations}")
    lines.append(f"converged      {fit.converged}")
    return "\n".join(lines) + "\n"


def _summarize_mcmc(chains: PosteriorChains, diag) -> str:
    flat = chains.flat()
    mean = flat.mean(axis=0)
    sd = flat.std(axis=0, ddof=1)
    lines = [
        "parameter            mean      sd        ess       rhat",
        "-" * 58,
    ]
    for k, name in enumerate(chains.param_names):
        lines.append(
            f"{name:<20s} {mean[k]: .3f}   {sd[k]:.3f}   {diag.ess[k]:8.0f}   {diag.rhat[k]:.3f}"
        )
    lines.append("")
    lines.append(f"chains         {chains.n_chains} x {chains.draws.shape[1]} (warmup {chains.warmup})")
    lines.append(f"acceptance     {np.mean(chains.acceptance_rates):.3f} (mean)")
    return "\n".join(lines) + "\n"


def _run_fit(config: dict, out_dir: Path) -> list[Path]:
    dataset_std, std = _load_standardized(config["data"])
    priors = PriorSpec.default(
        dataset_std.n_quality_features,
        dataset_std.n_free_lengthscales,
        beta_sd=config["beta_sd"],
        loglen_sd=config["loglen_sd"],
    )
    mode = SimilarityMode.parse(config["mode"])
    names = _param_names(dataset_std)
    outputs: list[Path] = []

    fit = map_fit(
        dataset_std,
        priors,
        OptConfig(restart_offsets=tuple(config["restarts"])),
        mode,
    )
    artifact = {
        "model": "determinantal",
        "method": config["method"],
        "mode": config["mode"],
        "feature_names": list(dataset_std.feature_names),
        "params": params_to_dict(fit.params),
        "map": {
            "log_posterior": fit.log_posterior,
            "grad_norm": fit.grad_norm,
            "iterations": fit.iterations,
            "converged": fit.converged,
        },
        "standardization": {"mean": std.mean.tolist(), "sd": std.sd.tolist()},
        "prior": {"beta_sd": config["beta_sd"], "loglen_sd": config["loglen_sd"]},
        "seed": config["seed"],
        "chains_file": None,
    }
    summary = _summarize_map(fit, names)

    if config["method"] == "mcmc":
        mcmc_cfg = McmcConfig(
            n_chains=config["chains"], n_warmup=config["warmup"], n_steps=config["steps"]
        )
        theta0 = np.concatenate([fit.params.beta, fit.params.log_lengthscales])
        chains = adaptive_mh(
            dataset_std, priors, mcmc_cfg, RngState(config["seed"]), mode, start=theta0
        )
        diag = diagnostics(chains)
        chains_path = out_dir / "chains.npz"
        np.savez(
            chains_path,
            draws=chains.draws,
            acceptance_rates=chains.acceptance_rates,
            warmup=chains.warmup,
            param_names=np.asarray(chains.param_names),
        )
        outputs.append(chains_path)
        diag_path = out_dir / "diagnostics.json"
        diag_path.write_text(
            json.dumps(
                {
                    "ess": diag.ess.tolist(),
                    "rhat": diag.rhat.tolist(),
                    "param_names": list(chains.param_names),
                    "acceptance_rates": chains.acceptance_rates.tolist(),
                },
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
        outputs.append(diag_path)
        flat = chains.flat()
        artifact["posterior_mean"] = flat.mean(axis=0).tolist()
        artifact["posterior_sd"] = flat.std(axis=0, ddof=1).tolist()
        artifact["chains_file"] = "chains.npz"
        summary += "\n" + _summarize_mcmc(chains, diag)
        from .plotting import render_chain_figure

        outputs.append(render_chain_figure(chains, out_dir / "chains.png"))

    fit_path = out_dir / "fit.json"
    write_fit_artifact(fit_path, artifact)
    outputs.insert(0, fit_path)
    summary_path = out_dir / "summary.txt"
    summary_path.write_text(summary, encoding="utf-8")
    outputs.append(summary_path)
    click.echo(summary)
    return outputs


def _param_names(dataset) -> list[str]:
    qnames = (
        [dataset.feature_names[i] for i in dataset.quality_mask]
        if dataset.quality_mask is not None
        else list(dataset.feature_names)
    )
    n_ell = dataset.n_free_lengthscales
    if dataset.lengthscale_groups is not None:
        ell_names = [f"log_len[g{g}]" for g in range(n_ell)]
    else:
        ell_names = [f"log_len[{dataset.feature_names[i]}]" for i in dataset.similarity_mask]
    return [f"beta[{n}]" for n in qnames] + ell_names


@main.command()
@click.option("--data", "data_path", type=click.Path(), required=True)
@click.option("--method", type=click.Choice(["map", "mcmc"]), default="map", show_default=True)
@click.option("--mode", type=click.Choice(["rbf", "identity", "all-ones"]), default="rbf", show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), required=True)
@click.option("--beta-sd", type=float, default=2.0, show_default=True)
@click.option("--loglen-sd", type=float, default=1.0, show_default=True)
@click.option("--chains", type=int, default=25, show_default=True)
@click.option("--warmup", type=int, default=2000, show_default=True)
@click.option("--steps", type=int, default=5000, show_default=True)
@click.option("--restarts", default="0,-1.5,1.5", show_default=True, help="log-lengthscale init offsets")
def fit(data_path, method, mode, seed, out, beta_sd, loglen_sd, chains, warmup, steps, restarts):
    """MAP or MCMC fit of the determinantal model; writes fit artifacts."""
    seed = _default_seed() if seed is None else seed
    config = {
        "data": str(data_path),
        "method": method,
        "mode": mode,
        "seed": seed,
        "beta_sd": beta_sd,
        "loglen_sd": loglen_sd,
        "chains": chains,
        "warmup": warmup,
        "steps": steps,
        "restarts": [float(x) for x in str(restarts).split(",") if x],
    }
    try:
        out_dir = _prepare_out(out)
        outputs = _run_fit(config, out_dir)
        _write_manifest(out_dir, "fit", config, seed, inputs=[data_path], outputs=outputs)
    except (DataError, FitError, OSError, FileNotFoundError) as exc:
        _fail(str(exc))


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _run_verify(config: dict, out_dir: Path | None):
    results = run_all(
        seed=config["seed"], trials=config["trials"], inject_fault=config["inject_fault"]
    )
    report = {
        "seed": config["seed"],
        "trials": config["trials"],
        "all_passed": all(r.passed for r in results),
        "checks": [r.as_dict() for r in results],
    }
    text = json.dumps(report, indent=2) + "\n"
    outputs = []
    if out_dir is not None:
        path = out_dir / "verify.json"
        path.write_text(text, encoding="utf-8")
        outputs.append(path)
    return report, text, outputs


@main.command()
@click.option("--seed", type=int, default=None)
@click.option("--trials", type=int, default=None, help="per-family instance cap (1 = smoke mode)")
@click.option("--out", type=click.Path(), default=None)
@click.option("--inject-fault", is_flag=True, hidden=True)
def verify(seed, trials, out, inject_fault):
    """Run the numerical verification suites; exit 3 on any failure."""
    seed = _default_seed() if seed is None else seed
    config = {"seed": seed, "trials": trials, "inject_fault": inject_fault}
    out_dir = _prepare_out(out) if out else None
    report, text, outputs = _run_verify(config, out_dir)
    if out_dir is not None:
        _write_manifest(out_dir, "verify", config, seed, outputs=outputs)
    click.echo(text, nl=False)
    for check in report["checks"]:
        status = "pass" if check["passed"] else "FAIL"
        click.echo(
            f"{status}  {check['name']}: max deviation {check['max_deviation']:.3e} "
            f"(tolerance {check['tolerance']:.3e})",
            err=True,
        )
    if not report["all_passed"]:
        sys.exit(EXIT_VERIFY)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _run_sweep(config: dict, out_dir: Path) -> tuple[list[Path], list[str]]:
    cfg = SpatialConfig(n_items=config["n_items"])
    report = run_sweep_experiment(
        radii=config["radii"],
        n_train=config["n_train"],
        n_eval=config["n_eval"],
        cfg=cfg,
        rng=RngState(config["seed"]),
        n_draws=config["n_draws"],
        beta_prior_sd=config["beta_sd"],
        loglen_prior_sd=config["loglen_sd"],
    )
    csv_path = out_dir / "report.csv"
    csv_path.write_text(report.to_csv(), encoding="utf-8")
    json_path = out_dir / "report.json"
    json_path.write_text(report.to_json(), encoding="utf-8")
    from .plotting import render_sweep_figure

    fig_path = render_sweep_figure(report, out_dir / "mcc_vs_radius.png")
    return [csv_path, json_path, fig_path], report.meta.get("errors", [])


@main.command()
@click.option("--radii", default="0.05,0.1,0.2,0.35,0.5,0.75,1.5,3.0", show_default=True)
@click.option("--n-train", type=int, default=200, show_default=True)
@click.option("--n-eval", type=int, default=50, show_default=True)
@click.option("--n-draws", type=int, default=200, show_default=True)
@click.option("--n-items", type=int, default=15, show_default=True)
@click.option("--beta-sd", type=float, default=2.0, show_default=True)
@click.option("--loglen-sd", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), required=True)
def sweep(radii, n_train, n_eval, n_draws, n_items, beta_sd, loglen_sd, seed, out):
    """Radius-sweep comparison of the three models; CSV + JSON + figure."""
    seed = _default_seed() if seed is None else seed
    config = {
        "radii": [float(r) for r in str(radii).split(",") if r],
        "n_train": n_train,
        "n_eval": n_eval,
        "n_draws": n_draws,
        "n_items": n_items,
        "beta_sd": beta_sd,
        "loglen_sd": loglen_sd,
        "seed": seed,
    }
    if not config["radii"]:
        raise click.UsageError("--radii must list at least one radius")
    try:
        out_dir = _prepare_out(out)
        outputs, errors = _run_sweep(config, out_dir)
        _write_manifest(out_dir, "sweep", config, seed, outputs=outputs)
    except (DataError, FitError, OSError) as exc:
        _fail(str(exc))
    click.echo(f"wrote {out_dir / 'report.csv'}")
    if errors:
        for e in errors:
            click.echo(f"sweep failure: {e}", err=True)
        sys.exit(EXIT_DATA)


# ---------------------------------------------------------------------------
# predict / evaluate
# ---------------------------------------------------------------------------


def _prediction_source(artifact: dict, fit_dir: Path):
    params = params_from_dict(artifact["params"])
    mode = SimilarityMode.parse(artifact["mode"])
    if artifact.get("chains_file"):
        payload = np.load(fit_dir / artifact["chains_file"], allow_pickle=False)
        chains = PosteriorChains(
            draws=payload["draws"],
            acceptance_rates=payload["acceptance_rates"],
            warmup=int(payload["warmup"]),
            param_names=tuple(str(x) for x in payload["param_names"]),
        )
        return posterior_source(chains, params, mode)
    return determinantal_source(params, mode)


def _run_predict(config: dict, out_dir: Path) -> list[Path]:
    artifact = read_fit_artifact(config["fit"])
    eval_std, _ = _load_standardized(config["data"], artifact)
    source = _prediction_source(artifact, Path(config["fit"]).parent)
    gen = RngState(config["seed"]).generator()
    lines = [json.dumps({"fit": str(config["fit"]), "n_draws": config["n_draws"]})]
    for obs in eval_std.observations:
        for d in range(config["n_draws"]):
            subset = source(obs, gen)
            ids = [obs.assortment.ids[i] for i in subset]
            lines.append(json.dumps({"id": obs.id, "draw": d, "chosen_ids": ids}))
    path = out_dir / "predictions.jsonl"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return [path]


@main.command()
@click.option("--fit", "fit_path", type=click.Path(), required=True)
@click.option("--data", "data_path", type=click.Path(), required=True)
@click.option("--n-draws", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), required=True)
def predict(fit_path, data_path, n_draws, seed, out):
    """Sample predicted subsets for every observation in a dataset."""
    seed = _default_seed() if seed is None else seed
    config = {"fit": str(fit_path), "data": str(data_path), "n_draws": n_draws, "seed": seed}
    try:
        out_dir = _prepare_out(out)
        outputs = _run_predict(config, out_dir)
        _write_manifest(out_dir, "predict", config, seed, inputs=[fit_path, data_path], outputs=outputs)
    except (DataError, DiagnosticsError, OSError, FileNotFoundError) as exc:
        _fail(str(exc))
    click.echo(f"wrote {out_dir / 'predictions.jsonl'}")


def _run_evaluate(config: dict, out_dir: Path) -> list[Path]:
    artifact = read_fit_artifact(config["fit"])
    eval_std, _ = _load_standardized(config["data"], artifact)
    source = _prediction_source(artifact, Path(config["fit"]).parent)
    result = evaluate_model(
        source,
        eval_std,
        config["n_draws"],
        RngState(config["seed"]).generator(),
        ci_method=config.get("ci", "normal"),
    )
    payload = {
        "mcc_mean": result.mcc_mean,
        "ci_half": result.ci_half,
        "n_observations": result.n_observations,
        "n_draws": result.n_draws,
    }
    path = out_dir / "scores.json"
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return [path]


@main.command()
@click.option("--fit", "fit_path", type=click.Path(), required=True)
@click.option("--data", "data_path", type=click.Path(), required=True)
@click.option("--n-draws", type=int, default=50, show_default=True)
@click.option("--ci", type=click.Choice(["normal", "bootstrap"]), default="normal", show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), required=True)
def evaluate(fit_path, data_path, n_draws, ci, seed, out):
    """Score sampled predictions against true selections (mean MCC and CI)."""
    seed = _default_seed() if seed is None else seed
    config = {"fit": str(fit_path), "data": str(data_path), "n_draws": n_draws, "ci": ci, "seed": seed}
    try:
        out_dir = _prepare_out(out)
        outputs = _run_evaluate(config, out_dir)
        _write_manifest(out_dir, "evaluate", config, seed, inputs=[fit_path, data_path], outputs=outputs)
    except (DataError, DiagnosticsError, OSError, FileNotFoundError) as exc:
        _fail(str(exc))
    click.echo((out_dir / "scores.json").read_text(), nl=False)


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------

_RUNNERS = {
    "simulate": _run_simulate,
    "fit": _run_fit,
    "sweep": lambda config, out_dir: _run_sweep(config, out_dir)[0],
    "predict": _run_predict,
    "evaluate": _run_evaluate,
    "verify": lambda config, out_dir: _run_verify(config, out_dir)[2],
}


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(), required=True)
@click.option("--out", type=click.Path(), required=True)
def replay(manifest_path, out):
    """Re-run a recorded command and byte-compare its outputs."""
    try:
        manifest = RunManifest.read(manifest_path)
        if manifest.command not in _RUNNERS:
            raise DataError(f"manifest command {manifest.command!r} is not replayable")
        out_dir = _prepare_out(out)
        _RUNNERS[manifest.command](manifest.config, out_dir)
        comparison = manifest.verify_outputs(out_dir)
    except (DataError, FitError, OSError) as exc:
        _fail(str(exc))
    for name, ok in comparison.items():
        click.echo(f"{'OK  ' if ok else 'DIFF'} {name}")
    if not all(comparison.values()):
        _fail("replayed outputs differ from the manifest record")
    click.echo("replay reproduced all outputs byte-identically")


if __name__ == "__main__":
    main()
