"""Write run artifacts: delimited series, bound reports, a text summary, and figures."""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from ..flow import save_trajectory

log = logging.getLogger(__name__)


def _write_columns(path: Path, columns: dict) -> None:
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(names)
        for row in data:
            wr.writerow([f"{x:.17g}" for x in row])


def write_artifacts(art, cfg, outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    ta, tb = art.trajectories
    save_trajectory(ta, outdir / "trajectory_1.csv")
    save_trajectory(tb, outdir / "trajectory_2.csv")
    _write_columns(outdir / "distances.csv", {"t": art.times, **art.distances})
    if art.functionals:
        _write_columns(outdir / "functionals.csv", {"t": art.times, **art.functionals})
    for rep in art.reports:
        rep.save(outdir / f"bounds_{rep.name}.csv")
    (outdir / "report.txt").write_text(render_summary(art, cfg))
    if cfg.figures:
        from .plotting import render_run_figures

        render_run_figures(art, outdir / "figures")


def render_summary(art, cfg) -> str:
    prov = art.provenance
    lines = [
        "stability experiment report",
        f"config hash: {prov['config_hash']}",
        f"code version: {prov['code_version']}",
        f"wall time: {prov['wall_time_s']:.2f} s",
        f"dimension {cfg.dimension}, N = {cfg.particles}, dt = {cfg.dt:g}, T = {cfg.T:g}, samples = {art.times.size}",
        f"interaction: {cfg.interaction}"
        + (f" ({cfg.kernel} {cfg.kernel_params})" if cfg.interaction == "kernel"
           else f" (grid {cfg.poisson_grid}, mollify {cfg.mollify:g})"),
        f"magnetic field: {cfg.magnetic} {cfg.magnetic_params}",
        f"constants: c_d = {cfg.c_d:g}, C_d = {cfg.C_d:g}, c0 = {cfg.c0:g} (c0 is a placeholder)",
        "",
    ]
    for key, val in art.extras.items():
        if np.ndim(val) == 0:
            lines.append(f"{key} = {val:.6g}")
    lines.append("")
    for rep in art.reports:
        lines.append(rep.summary())
    for note in art.notes:
        lines.append(f"note: {note}")
    verdict = "PASS" if art.quantitative_passed else "FAIL"
    lines += ["", f"overall (quantitative verdicts): {verdict}", ""]
    return "\n".join(lines)
