"""Figure rendering for sweep and timing reports.

Every report-producing CLI path saves a PNG next to its CSV/JSON output;
all functions take already-computed rows so they stay free of solver
imports and render deterministically from the data alone.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_MARKERS = ("o", "s", "^", "v", "D", "x", "*", "P")


def _styled_axes(xlabel, ylabel, title):
    fig, ax = plt.subplots(figsize=(7.0, 4.6))
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    return fig, ax


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def render_error_vs_dt(rows, path) -> Path:
    """Log-log error against step size, one line per stepper id."""
    fig, ax = _styled_axes(
        "time step size [s]", "L-inf height error [m]", "error vs. time step size"
    )
    by_id: dict[str, list] = {}
    for r in rows:
        by_id.setdefault(r.stepper_id, []).append(r)
    for k, (sid, group) in enumerate(sorted(by_id.items())):
        pts = [(r.dt, r.error) for r in group if r.status in ("ok", "filtered")]
        if not pts:
            continue
        pts.sort()
        ax.loglog(
            [p[0] for p in pts],
            [p[1] for p in pts],
            marker=_MARKERS[k % len(_MARKERS)],
            label=sid,
        )
    ax.legend(fontsize=8)
    return _save(fig, path)


def render_wallclock_vs_error(rows, path) -> Path:
    fig, ax = _styled_axes(
        "wallclock time [s]", "L-inf height error [m]", "wallclock time vs. error"
    )
    by_id: dict[str, list] = {}
    for r in rows:
        by_id.setdefault(r.stepper_id, []).append(r)
    for k, (sid, group) in enumerate(sorted(by_id.items())):
        pts = [(r.wallclock, r.error) for r in group if r.status in ("ok", "filtered")]
        if not pts:
            continue
        pts.sort()
        ax.loglog(
            [p[0] for p in pts],
            [p[1] for p in pts],
            marker=_MARKERS[k % len(_MARKERS)],
            linestyle="--",
            label=sid,
        )
    ax.legend(fontsize=8)
    return _save(fig, path)


def render_stiffness(heights, errors, path, dt=None) -> Path:
    title = "error vs. linear oscillatory stiffness"
    if dt is not None:
        title += f" (dt = {dt:g} s)"
    fig, ax = _styled_axes("mean surface height [m]", "L-inf height error [m]", title)
    ax.semilogy(heights, errors, marker="o")
    return _save(fig, path)


def render_breakdown(breakdowns: dict[int, dict], path) -> Path:
    """Grouped bars of the timing categories over the worker counts."""
    categories = ("overall", "nonlinearities", "rexi_total", "broadcast", "term_solves", "reduce")
    ks = sorted(breakdowns)
    fig, ax = _styled_axes("", "wallclock time [s]", "REXI parallelization overheads")
    width = 0.8 / max(len(ks), 1)
    for i, k in enumerate(ks):
        values = [max(breakdowns[k].get(c, 0.0), 1e-9) for c in categories]
        xs = [j + (i - (len(ks) - 1) / 2) * width for j in range(len(categories))]
        ax.bar(xs, values, width=width, label=f"K={k}")
    ax.set_yscale("log")
    ax.set_xticks(range(len(categories)))
    ax.set_xticklabels(categories, rotation=20, fontsize=8)
    ax.legend(fontsize=8)
    return _save(fig, path)
