"""Report figures rendered next to the delimited outputs.

Headless (Agg) rendering only; PNG metadata is pinned so identical runs
produce identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_PNG_METADATA = {"Software": "detchoice"}

_MODEL_STYLE = {
    "determinantal": {"color": "#1f3d7a", "linestyle": "-", "marker": "o"},
    "logistic": {"color": "#7fbf7f", "linestyle": "--", "marker": "s"},
    "mnl": {"color": "#2d6a4f", "linestyle": ":", "marker": "^"},
}


def render_sweep_figure(report, path) -> Path:
    """Mean MCC against radius for each model, with confidence bands."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    radii = report.radii()
    for model in ("logistic", "mnl", "determinantal"):
        rows = [report.row(r, model) for r in radii if _has_row(report, r, model)]
        if not rows:
            continue
        xs = [r.radius for r in rows]
        means = [r.mcc_mean for r in rows]
        halfs = [r.ci_half for r in rows]
        style = _MODEL_STYLE[model]
        ax.plot(xs, means, label=model, **style)
        ax.fill_between(
            xs,
            [m - h for m, h in zip(means, halfs)],
            [m + h for m, h in zip(means, halfs)],
            color=style["color"],
            alpha=0.18,
            linewidth=0,
        )
    ax.set_xlabel("thinning radius r")
    ax.set_ylabel("mean MCC")
    ax.set_title("Out-of-sample prediction quality by negative-dependence radius")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150, metadata=_PNG_METADATA)
    plt.close(fig)
    return path


def _has_row(report, radius, model) -> bool:
    try:
        report.row(radius, model)
        return True
    except KeyError:
        return False


def render_chain_figure(chains, path) -> Path:
    """Trace and histogram per parameter for kept MCMC draws."""
    n_params = chains.n_params
    names = chains.param_names or tuple(f"theta[{i}]" for i in range(n_params))
    fig, axes = plt.subplots(n_params, 2, figsize=(9.0, 2.0 * n_params), squeeze=False)
    for p in range(n_params):
        trace_ax, hist_ax = axes[p]
        for c in range(chains.n_chains):
            trace_ax.plot(chains.draws[c, :, p], linewidth=0.5, alpha=0.7)
        trace_ax.set_ylabel(names[p], fontsize=8)
        hist_ax.hist(chains.draws[:, :, p].ravel(), bins=60, color="#1f3d7a", alpha=0.8)
    axes[-1][0].set_xlabel("kept step")
    axes[-1][1].set_xlabel("value")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120, metadata=_PNG_METADATA)
    plt.close(fig)
    return path
