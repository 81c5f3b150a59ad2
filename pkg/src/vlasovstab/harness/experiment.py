"""Two-solution stability experiments: build, step, measure, compare to bounds."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..bounds import (
    BoundReport,
    cumulative_trapezoid,
    dobrushin_bound,
    j_series,
    statement1_check,
    statement2_check,
    statement2_radius,
    theorem2_bound,
    theorem2_gain,
)
from ..ensemble import PhaseEnsemble, deposit_arrays, interpolate_grid, lp_norm, sample_ensemble
from ..fields import (
    ConstantUniform,
    b_norms,
    kernel_hessian_bound,
    make_kernel,
    make_magnetic,
    mollify,
    mean_field_force,
    pairwise_force,
    solve_poisson,
)
from ..flow import Trajectory, kick_rotate_kick, lorentz_rhs, rk4_step, velocity_bound_check
from ..geometry import torus_wrap
from ..transport import (
    PhaseMetricConfig,
    dobrushin_functional,
    kinetic_functional,
    loeper_functional,
    renormalized_functional,
    wasserstein_entropic,
    wasserstein_exact,
)
from .config import ExperimentConfig

log = logging.getLogger(__name__)


@dataclass
class RunArtifacts:
    trajectories: tuple
    distances: dict
    functionals: dict
    reports: list
    provenance: dict
    notes: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.trajectories[0].times

    @property
    def quantitative_passed(self) -> bool:
        return all(r.passed for r in self.reports if r.label == "quantitative")


# --- dynamics -------------------------------------------------------------------------


class Dynamics:
    """Time stepper for one ensemble under the configured forces.

    Constant fields use kick / exact rotation / kick so that the force-free
    part carries no scheme error; spatially varying fields use classical
    Runge-Kutta with the force re-evaluated at every stage.
    """

    def __init__(self, cfg: ExperimentConfig, weights: np.ndarray):
        self.cfg = cfg
        self.w = weights
        self.bfield = make_magnetic(cfg.magnetic, cfg.dimension, **cfg.magnetic_params)
        self.kernel = make_kernel(cfg.kernel, **cfg.kernel_params) if cfg.interaction == "kernel" else None
        self.splitting = isinstance(self.bfield, ConstantUniform)

    def density(self, x):
        rho = deposit_arrays(torus_wrap(x), self.w, self.cfg.poisson_grid)
        return mollify(rho, self.cfg.mollify)

    def field_sample(self, x):
        return solve_poisson(self.density(x))

    def force(self, x):
        if self.kernel is not None:
            if self.cfg.summation == "direct":
                return pairwise_force(torus_wrap(x), self.w, self.kernel, self.cfg.workers)
            return mean_field_force(torus_wrap(x), self.w, self.kernel, self.cfg.workers)
        fs = self.field_sample(x)
        return interpolate_grid(fs.efield, torus_wrap(x))

    def run(self, ens: PhaseEnsemble, sample_steps, on_sample=None) -> Trajectory:
        cfg = self.cfg
        x, v = ens.x.copy(), ens.v.copy()
        states, times = [], []
        sample_steps = set(sample_steps)

        def record(step):
            times.append(step * cfg.dt)
            states.append((x.copy(), v.copy()))
            if on_sample is not None:
                on_sample(x)

        record(0)
        if self.splitting:
            omega = self.bfield.omega
            f = self.force(x)
            for step in range(1, cfg.steps + 1):
                x, v, f = kick_rotate_kick(x, v, f, omega, cfg.dt, self.force)
                if step in sample_steps:
                    record(step)
        else:
            rhs = lorentz_rhs(lambda t, y: self.force(y), self.bfield, cfg.dimension)
            for step in range(1, cfg.steps + 1):
                x, v = rk4_step(rhs, (step - 1) * cfg.dt, x, v, cfg.dt)
                x = torus_wrap(x)
                if step in sample_steps:
                    record(step)
        return Trajectory.from_states(times, states, ens.w)


def sample_schedule(cfg: ExperimentConfig) -> list:
    steps = list(range(cfg.stride, cfg.steps + 1, cfg.stride))
    if not steps or steps[-1] != cfg.steps:
        steps.append(cfg.steps)
    return steps


def initial_pair(cfg: ExperimentConfig):
    ens1 = sample_ensemble(cfg.family, cfg.particles, cfg.seed, cfg.dimension, **cfg.family_params)
    if cfg.independent:
        ens2 = sample_ensemble(cfg.family, cfg.particles, cfg.seed + 1, cfg.dimension, **cfg.family_params)
    else:
        sx, sv = cfg.shift_vectors()
        ens2 = ens1.replace(x=ens1.x + sx, v=ens1.v + sv)
    return ens1, ens2


# --- measurement ---------------------------------------------------------------------


def measure_distances(cfg: ExperimentConfig, ta: Trajectory, tb: Trajectory, orders) -> dict:
    out = {}
    for p in orders:
        metric = PhaseMetricConfig(p=p)
        vals, ent = [], []
        for t in ta.times:
            a, b = ta.ensemble(t), tb.ensemble(t)
            if cfg.method == "exact":
                vals.append(wasserstein_exact(a, b, metric)[0])
            else:
                ent.append(wasserstein_entropic(a, b, metric, epsilon=cfg.epsilon).distance)
        if cfg.method == "exact":
            out[f"W{p}"] = np.array(vals)
        else:
            out[f"W{p}_entropic"] = np.array(ent)
    return out


def _measured(distances: dict, p: int) -> np.ndarray:
    return distances.get(f"W{p}", distances.get(f"W{p}_entropic"))


def fit_statement1_constant(times, w2sq, running_j) -> float:
    """Smallest c with W2^2(t) <= exp(log W2^2(0) exp(-c I(t))) at every sample."""
    log0 = np.log(w2sq[0])
    c = 0.0
    for wt, I in zip(w2sq[1:], running_j[1:]):
        if I <= 0 or wt <= 0:
            continue
        ratio = np.log(wt) / log0
        if ratio >= 1.0:
            continue
        if ratio <= 0:
            return float("inf")
        c = max(c, -np.log(ratio) / I)
    return float(c)


def run_stability_experiment(cfg: ExperimentConfig, write: bool = True, outdir=None) -> RunArtifacts:
    """Evolve two nearby ensembles with identical schedules and test the configured bounds."""
    start = time.perf_counter()
    ens1, ens2 = initial_pair(cfg)
    schedule = sample_schedule(cfg)
    dyn = Dynamics(cfg, ens1.w)

    diag = {1: [], 2: []}

    def tracker(which):
        def on_sample(x):
            if cfg.interaction == "poisson":
                rho = dyn.density(x)
                fs = solve_poisson(rho)
                diag[which].append((lp_norm(rho, np.inf), fs.sup_norm()))
        return on_sample

    log.info("stepping ensemble 1 (%d steps)", cfg.steps)
    ta = dyn.run(ens1, schedule, tracker(1))
    log.info("stepping ensemble 2 (%d steps)", cfg.steps)
    tb = dyn.run(ens2, schedule, tracker(2))
    times = ta.times

    wants_w2 = bool({"statement1", "statement2"} & set(cfg.bounds)) or cfg.interaction == "poisson"
    distances = measure_distances(cfg, ta, tb, (1, 2) if wants_w2 else (1,))
    w1 = _measured(distances, 1)

    metric1 = PhaseMetricConfig(p=1)
    _, pi_w1 = wasserstein_exact(ens1, ens2, metric1) if len(ens1) * 2 <= metric1.cap else (None, None)
    functionals = {}
    notes = []
    if pi_w1 is not None:
        functionals["N"] = np.array([dobrushin_functional(pi_w1, ta, tb, t) for t in times])
        if isinstance(dyn.bfield, ConstantUniform):
            functionals["Q_renormalized"] = np.array(
                [renormalized_functional(pi_w1, ta, tb, dyn.bfield.omega, t) for t in times])
        _, pi_w2 = wasserstein_exact(ens1, ens2, PhaseMetricConfig(p=2))
        functionals["Q_loeper"] = np.array([loeper_functional(pi_w2, ta, tb, t) for t in times])
        kin = []
        for t in times:
            try:
                kq = kinetic_functional(pi_w2, ta, tb, t)
                kin.append(kq.value if kq.in_regime else np.nan)
            except ValueError:
                kin.append(0.0)
        functionals["Q_kinetic"] = np.array(kin)
    else:
        notes.append("ensembles exceed the exact-solver cap: coupling functionals skipped")

    reports = []
    extras = {}
    d = cfg.dimension
    w1_0 = float(w1[0])
    if dyn.kernel is not None:
        H = kernel_hessian_bound(dyn.kernel, d=d)
        extras["H"] = H
        omega = dyn.bfield.omega if isinstance(dyn.bfield, ConstantUniform) else None
        common = {"H": H, "omega": omega, "d": d, "W1_0": w1_0, "dt": cfg.dt, "N": cfg.particles}
        if "dobrushin" in cfg.bounds:
            bound = np.array([dobrushin_bound(H, t, w1_0) for t in times])
            reports.append(BoundReport("dobrushin", times, w1, bound, cfg.tolerance, common))
        if "theorem2" in cfg.bounds:
            bound = np.array([theorem2_bound(d, H, omega, t, w1_0) for t in times])
            reports.append(BoundReport("theorem2", times, w1, bound, cfg.tolerance, common))
        if "renormalized" in cfg.bounds and "Q_renormalized" in functionals:
            bound = np.array([theorem2_gain(d, omega, t) for t in times]) * functionals["Q_renormalized"]
            reports.append(BoundReport("renormalized", times, w1, bound, cfg.tolerance, common))

    if cfg.interaction == "poisson":
        notes.append("Poisson run: bounded-density hypotheses are not met by particle data; "
                     "the W2 stability verdicts are qualitative")
        rho1 = np.array([r for r, _ in diag[1]])
        rho2 = np.array([r for r, _ in diag[2]])
        esup2 = np.array([e for _, e in diag[2]])
        A = rho1 + rho2
        bsup, bsemi = b_norms(dyn.bfield, cfg.T, cfg.alpha, d=d)
        J = j_series(times, A, rho2, bsup, bsemi)
        running = cumulative_trapezoid(J, times)
        w2sq = _measured(distances, 2) ** 2
        w2sq_0 = float(w2sq[0])
        extras.update({"A": A, "rho2sup": rho2, "Esup2": esup2, "J": J, "int_J": running,
                       "Bsup": bsup, "Bhol": bsemi})
        base = {"W2sq_0": w2sq_0, "Bsup": bsup, "Bhol": bsemi, "alpha": cfg.alpha,
                "mollify": cfg.mollify, "grid": cfg.poisson_grid, "dt": cfg.dt,
                "quadrature_step": float(np.diff(times).max())}
        if "statement1" in cfg.bounds and w2sq_0 > 0:
            c_fit = fit_statement1_constant(times, w2sq, running)
            extras["c_d_fitted"] = c_fit
            for tag, c in (("configured", cfg.c_d), ("fitted", c_fit)):
                st = statement1_check(w2sq_0, float(running[-1]), c)
                bound = np.array([st.rhs(I) for I in running])
                inputs = dict(base, c_d=c, c_d_source=tag, admissible=st.admissible, reason=st.reason)
                reports.append(BoundReport(f"statement1_{tag}", times, w2sq, bound, cfg.tolerance, inputs,
                                           "qualitative", st.reason))
        if "statement2" in cfg.bounds and w2sq_0 > 0:
            st = statement2_check(w2sq_0, float(running[-1]), cfg.C_d, cfg.c0)
            bound = np.array([st.rhs(I) for I in running])
            inputs = dict(base, C_d=cfg.C_d, c0=cfg.c0, c0_note="placeholder smallness constant",
                          admissible=st.admissible, reason=st.reason,
                          radius=statement2_radius(w2sq_0) if w2sq_0 * abs(np.log(w2sq_0 / 2)) < 1 else float("nan"))
            reports.append(BoundReport("statement2", times, w2sq, bound, cfg.tolerance, inputs,
                                       "qualitative", st.reason))
        if "velocity" in cfg.bounds:
            vb = velocity_bound_check(tb, esup2, bsup)
            ratio = (vb.speed / vb.bound).max(axis=1)
            reports.append(BoundReport("velocity_ratio", times, ratio, np.ones_like(ratio), 0.0,
                                       {"Bsup": bsup, "Esup": "grid sup at samples"}, "qualitative"))

    provenance = {
        "config_hash": cfg.config_hash,
        "code_version": __version__,
        "wall_time_s": time.perf_counter() - start,
        "c_d": cfg.c_d, "C_d": cfg.C_d, "c0": cfg.c0,
    }
    art = RunArtifacts((ta, tb), distances, functionals, reports, provenance, notes, extras)
    if write:
        from .report import write_artifacts

        write_artifacts(art, cfg, Path(outdir or cfg.output))
    return art

