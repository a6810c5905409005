"""File-output plotting helpers for the experiment runner.

Every figure is rendered headlessly to a file, and every figure has a
plain-text twin: a two-column, '#'-commented data file that gnuplot (or any
spreadsheet) can replot without this package installed.
"""

from __future__ import annotations

import math
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .montecarlo import EmpiricalDistribution, ExperimentRecord, RateFitResult
from .numerics import normal_cdf

__all__ = [
    "distribution_figure",
    "margin_figure",
    "rate_figure",
    "thinned_ecdf",
    "write_xy_data",
]

FIGSIZE = (6.4, 4.2)
DPI = 150
GRID_STYLE = {"alpha": 0.3, "linewidth": 0.6}
POSITIVE_FLOOR = 1e-16
ECDF_MAX_POINTS = 2048


def write_xy_data(path, xs, ys, comment: str = "") -> str:
    """Write a gnuplot-compatible two-column data file and return its path."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be 1-d arrays of equal length")
    lines = []
    if comment:
        for piece in comment.splitlines():
            lines.append(f"# {piece}")
    lines.append("# x y")
    for x, y in zip(xs, ys):
        lines.append(f"{float(x)!r} {float(y)!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return os.fspath(path)


def _new_axes(xlabel: str, ylabel: str, title: str):
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, **GRID_STYLE)
    return fig, ax


def _save(fig, path) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return os.fspath(path)


def rate_figure(path, records, fit: RateFitResult | None = None, label: str = "") -> str:
    """Log-log KS distance against sample size, with the fitted power law.

    Records excluded from the fit (noise-dominated) are drawn as open
    markers; the DKW band is drawn as a dashed envelope.
    """
    records = sorted(records, key=lambda r: r.n)
    ns = np.array([r.n for r in records], dtype=np.float64)
    ks = np.array([r.ks_estimate for r in records], dtype=np.float64)
    dkw = np.array([r.dkw_band for r in records], dtype=np.float64)

    fig, ax = _new_axes("sample size n", "KS distance to normal", label or "convergence rate")
    used = np.ones(len(records), dtype=bool)
    if fit is not None:
        used = np.array([r.n in fit.used_sizes for r in records])
    if used.any():
        ax.loglog(ns[used], ks[used], "o", color="C0", label="KS estimate")
    if (~used).any():
        ax.loglog(ns[~used], ks[~used], "o", mfc="none", color="C0",
                  label="noise-dominated")
    ax.loglog(ns, 2.0 * dkw, "--", color="C3", linewidth=0.9, label="2 x DKW band")
    if fit is not None and used.any():
        grid = np.geomspace(ns[used].min(), ns[used].max(), 64)
        line = np.exp(fit.intercept) * grid ** fit.slope
        ax.loglog(grid, line, "-", color="C1",
                  label=f"fit slope {fit.slope:.3f} (r2 {fit.r_squared:.3f})")
    ax.legend(fontsize=8)
    return _save(fig, path)


def thinned_ecdf(e: EmpiricalDistribution):
    finite = e.sorted_values[np.isfinite(e.sorted_values)]
    if finite.size == 0:
        raise ValueError("no finite statistic values to plot")
    if finite.size <= ECDF_MAX_POINTS:
        xs = finite
    else:
        idx = np.linspace(0, finite.size - 1, ECDF_MAX_POINTS).round().astype(np.int64)
        xs = finite[idx]
    # Right-continuous ECDF over all replications, infinities included.
    heights = np.searchsorted(e.sorted_values, xs, side="right") / e.replications
    return xs, heights


def distribution_figure(path, e: EmpiricalDistribution, label: str = "") -> str:
    """Empirical CDF of the statistic against the standard normal CDF."""
    xs, heights = thinned_ecdf(e)
    fig, ax = _new_axes("w", "P(W <= w)", label or "statistic distribution")
    ax.step(xs, heights, where="post", color="C0", label="empirical CDF")
    grid = np.linspace(min(xs[0], -4.0), max(xs[-1], 4.0), 512)
    ax.plot(grid, [normal_cdf(g) for g in grid], color="C1", linewidth=1.0,
            label="standard normal")
    if e.degenerate_count:
        ax.set_title(f"{label or 'statistic distribution'} "
                     f"({e.degenerate_count} degenerate)")
    ax.legend(fontsize=8)
    return _save(fig, path)


def margin_figure(path, reports, label: str = "") -> str:
    """Dot chart of checked inequalities: observed value against its bound.

    Zero and non-applicable quantities sit on a tiny positive floor so the
    log axis can hold every check in one panel.
    """
    names = [r.name for r in reports]
    lhs = [max(r.lhs, POSITIVE_FLOOR) if math.isfinite(r.lhs) else POSITIVE_FLOOR
           for r in reports]
    rhs = [max(r.rhs, POSITIVE_FLOOR) if math.isfinite(r.rhs) else POSITIVE_FLOOR
           for r in reports]
    ys = np.arange(len(reports))[::-1]

    fig, ax = plt.subplots(figsize=(FIGSIZE[0], 1.0 + 0.38 * len(reports)))
    ax.set_xscale("log")
    for y, lo, hi, rep in zip(ys, lhs, rhs, reports):
        if not rep.applicable:
            color = "0.6"
        elif rep.passed:
            color = "C2"
        else:
            color = "C3"
        ax.plot([lo, hi], [y, y], color=color, linewidth=1.0)
        ax.plot([lo], [y], "o", color=color)
        ax.plot([hi], [y], "|", color=color, markersize=10)
    ax.set_yticks(ys)
    ax.set_yticklabels(
        [f"{n} [{'n/a' if not r.applicable else ('pass' if r.passed else 'FAIL')}]"
         for n, r in zip(names, reports)],
        fontsize=8,
    )
    ax.set_xlabel("observed (dot) vs bound (bar)")
    ax.set_title(label or "inequality margins")
    ax.grid(True, axis="x", **GRID_STYLE)
    return _save(fig, path)
