"""Report figures: fitted additive components, QQ diagnostic, lambda path, rates.

Figures are drawn on the Agg canvas and written straight to files, so no
display or pyplot state is involved.
"""

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure


def _save(fig, path, dpi=120):
    FigureCanvasAgg(fig)
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    return path


def plot_components(grid, path, truth=None):
    """One panel per nonlinear covariate from a ``g_grid`` mapping.

    ``truth`` optionally maps the same names to callables of the ``[0, 1]``
    coordinate, drawn dashed after centering on the grid.
    """
    names = list(grid)
    fig = Figure(figsize=(3.6 * max(1, len(names)), 3.2))
    for j, name in enumerate(names):
        ax = fig.add_subplot(1, len(names), j + 1)
        entry = grid[name]
        x = np.asarray(entry.get("original", entry["z"]))
        ax.plot(x, entry["g"], color="k", lw=1.5, label="estimate")
        if truth and name in truth:
            t = np.asarray(truth[name](np.asarray(entry["z"])))
            ax.plot(x, t - t.mean(), "--", color="tab:red", lw=1.2, label="truth")
            ax.legend(frameon=False, fontsize=8)
        ax.set_xlabel(name)
        ax.set_ylabel(f"g({name})" if j == 0 else "")
        ax.axhline(0.0, color="0.8", lw=0.6, zorder=0)
    return _save(fig, path)


def plot_qq(table, path):
    """Simulated against observed response quantiles, with the 45 degree line."""
    table = np.asarray(table)
    sim, obs = table[:, 1], table[:, 2]
    fig = Figure(figsize=(4.0, 4.0))
    ax = fig.add_subplot(1, 1, 1)
    ax.plot(obs, sim, ".", ms=2, color="k")
    lo, hi = min(obs.min(), sim.min()), max(obs.max(), sim.max())
    ax.plot([lo, hi], [lo, hi], color="tab:red", lw=1)
    ax.set_xlabel("observed quantile")
    ax.set_ylabel("simulated quantile")
    ax.set_aspect("equal", adjustable="box")
    return _save(fig, path)


def plot_path(lambdas, scores, sizes, path, selected=None, label="QBIC"):
    """Selection score and active-set size along a lambda grid."""
    lambdas, scores = np.asarray(lambdas), np.asarray(scores, dtype=float)
    fig = Figure(figsize=(5.5, 3.4))
    ax = fig.add_subplot(1, 1, 1)
    ok = np.isfinite(scores)
    ax.plot(lambdas[ok], scores[ok], "o-", ms=3, color="k")
    ax.set_xscale("log")
    ax.set_xlabel("lambda")
    ax.set_ylabel(label)
    ax2 = ax.twinx()
    ax2.step(lambdas, sizes, where="mid", color="tab:blue", lw=1)
    ax2.set_ylabel("active covariates", color="tab:blue")
    if selected is not None:
        ax.axvline(lambdas[selected], color="tab:red", ls=":", lw=1)
    return _save(fig, path)


def plot_rate(rows, path):
    """Oracle coefficient and ``g`` errors against ``n`` on log-log axes."""
    rows = np.asarray(rows)
    fig = Figure(figsize=(4.5, 3.4))
    ax = fig.add_subplot(1, 1, 1)
    ax.loglog(rows[:, 0], rows[:, 1], "o-", color="k", label="coefficients")
    ax.loglog(rows[:, 0], rows[:, 2], "s--", color="tab:blue", label="g")
    ax.set_xlabel("n")
    ax.set_ylabel("mean squared error")
    ax.legend(frameon=False)
    return _save(fig, path)
