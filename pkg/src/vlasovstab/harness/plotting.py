"""Figure rendering for run reports. Files only; the Agg backend is forced."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

GOLDEN = (math.sqrt(5) - 1.0) / 2.0

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "savefig.dpi": 150,
    "figure.subplot.bottom": 0.16,
    "figure.subplot.left": 0.15,
}


def new_figure(width=4.8, height=None):
    height = height or width * GOLDEN
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, height))
    return fig, ax


def save(fig, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        fig.savefig(path)
    plt.close(fig)


def plot_bound(rep, path: Path):
    fig, ax = new_figure()
    ax.semilogy(rep.times, rep.bound, "k--", label="bound")
    ax.semilogy(rep.times, rep.measured, "C0", label="measured")
    bad = ~rep.verdicts
    if bad.any():
        ax.semilogy(rep.times[bad], rep.measured[bad], "rx", label="violation")
    ax.set_xlabel("t")
    ax.set_title(f"{rep.name} ({rep.label})", fontsize=9)
    ax.legend(frameon=False)
    save(fig, path)


def plot_series(times, series: dict, path: Path, ylabel=""):
    fig, ax = new_figure()
    for name, vals in series.items():
        ax.plot(times, vals, label=name)
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False)
    save(fig, path)


def render_run_figures(art, figdir: Path):
    for rep in art.reports:
        plot_bound(rep, figdir / f"bound_{rep.name}.png")
    plot_series(art.times, art.distances, figdir / "distances.png", "distance")
    if art.functionals:
        plot_series(art.times, art.functionals, figdir / "functionals.png")
