"""Command line entry point.

Exit codes: 0 on success or passing verdicts, 1 on a failed verdict, 2 on
configuration or usage errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ..bounds import (
    DEFAULT_C0,
    BoundReport,
    cumulative_trapezoid,
    dobrushin_bound,
    j_series,
    statement1_check,
    statement2_check,
    theorem2_bound,
    theorem2_gain,
)
from ..ensemble import ConfigError, load_ensemble
from ..flow import save_trajectory
from ..transport import CapacityError, PhaseMetricConfig, save_coupling, wasserstein_entropic, wasserstein_exact
from .config import load_config
from .experiment import Dynamics, initial_pair, run_stability_experiment, sample_schedule

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.workers:
        cfg.workers = args.workers
    ens, _ = initial_pair(cfg)
    if args.ensemble:
        ens = load_ensemble(args.ensemble)
        if ens.dimension != cfg.dimension:
            raise ConfigError("ensemble file dimension does not match the config")
    traj = Dynamics(cfg, ens.w).run(ens, sample_schedule(cfg))
    out = Path(args.out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    save_trajectory(traj, out / "trajectory_1.csv")
    print(f"wrote {out / 'trajectory_1.csv'} ({traj.times.size} samples)")
    return EXIT_OK


def cmd_stability(args) -> int:
    cfg = load_config(args.config)
    if args.no_figures:
        cfg.figures = False
    if args.workers:
        cfg.workers = args.workers
    art = run_stability_experiment(cfg, write=True, outdir=args.out)
    for rep in art.reports:
        print(rep.summary())
    for note in art.notes:
        print(f"note: {note}")
    print(f"outputs in {args.out or cfg.output}")
    return EXIT_OK if art.quantitative_passed else EXIT_FAIL


def cmd_transport(args) -> int:
    a, b = load_ensemble(args.a), load_ensemble(args.b)
    metric = PhaseMetricConfig(p=args.p, cap=args.cap)
    if args.method == "entropic":
        res = wasserstein_entropic(a, b, metric, epsilon=args.epsilon, iters=args.iters)
        print(_fmt(res.distance))
        print(f"# entropic estimate, epsilon={args.epsilon:g}, converged={res.converged}", file=sys.stderr)
        return EXIT_OK
    try:
        dist, plan = wasserstein_exact(a, b, metric)
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(_fmt(dist))
    if args.coupling:
        save_coupling(plan, args.coupling)
    return EXIT_OK


def _series_bounds(args) -> int:
    data = np.genfromtxt(args.series, delimiter=",", names=True)
    names = data.dtype.names or ()
    missing = {"t", "A", "rho2sup"} - set(names)
    if missing:
        raise ConfigError(f"series file lacks columns {sorted(missing)}")
    t = np.atleast_1d(data["t"])
    A = np.atleast_1d(data["A"])
    rho2 = np.atleast_1d(data["rho2sup"])
    if not all(np.all(np.isfinite(c)) for c in (t, A, rho2)):
        raise ConfigError("series file has missing or non-numeric entries")
    J = j_series(t, A, rho2, args.bsup, args.bhol)
    running = cumulative_trapezoid(J, t)
    st1 = statement1_check(args.w2sq, float(running[-1]), args.cd)
    st2 = statement2_check(args.w2sq, float(running[-1]), args.Cd, args.c0)
    print(f"int_J = {_fmt(running[-1])}")
    print(f"statement1 admissible = {st1.admissible} ({st1.reason})")
    print(f"statement2 admissible = {st2.admissible} ({st2.reason})")
    print("t,J,int_J,rhs1,rhs2")
    for ti, ji, ii in zip(t, J, running):
        print(",".join(_fmt(x) for x in (ti, ji, ii, st1.rhs(ii), st2.rhs(ii))))
    ok = st1.admissible and st2.admissible
    if "measured" in names:
        measured = np.atleast_1d(data["measured"])
        inputs = {"W2sq_0": args.w2sq, "Bsup": args.bsup, "Bhol": args.bhol, "c_d": args.cd, "C_d": args.Cd, "c0": args.c0}
        reps = [
            BoundReport("statement1", t, measured, [st1.rhs(i) for i in running], args.tolerance, inputs,
                        regime=st1.reason),
            BoundReport("statement2", t, measured, [st2.rhs(i) for i in running], args.tolerance, inputs,
                        regime=st2.reason),
        ]
        for rep in reps:
            print(rep.summary())
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                rep.save(Path(args.out) / f"bounds_{rep.name}.csv")
        ok = ok and all(r.passed for r in reps)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_bounds(args) -> int:
    if args.series:
        return _series_bounds(args)
    if args.dobrushin:
        print(_fmt(dobrushin_bound(args.H, args.t, args.w1)))
    elif args.theorem2:
        print(_fmt(theorem2_bound(args.d, args.H, args.omega, args.t, args.w1)))
    elif args.gain:
        print(_fmt(theorem2_gain(args.d, args.omega, args.t)))
    elif args.statement1 or args.statement2:
        st = (statement1_check(args.w2sq, args.jint, args.cd) if args.statement1
              else statement2_check(args.w2sq, args.jint, args.Cd, args.c0))
        print(f"admissible = {st.admissible} ({st.reason})")
        print(_fmt(st.rhs(args.jint)))
        return EXIT_OK if st.admissible else EXIT_FAIL
    else:
        raise ConfigError("choose one of --dobrushin, --theorem2, --gain, --statement1, --statement2, --series")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from ..selftest import run_selftest

    return EXIT_OK if run_selftest(seed=args.seed) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vlasovstab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="evolve one ensemble and write its trajectory")
    p.add_argument("--config", required=True)
    p.add_argument("--ensemble", help="initial ensemble CSV (overrides the config family)")
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stability", help="two-solution experiment with bound verdicts")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=0)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("transport", help="Wasserstein distance between two ensemble files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--p", type=int, choices=(1, 2), default=1)
    p.add_argument("--method", choices=("exact", "entropic"), default="exact")
    p.add_argument("--epsilon", type=float, default=1e-2)
    p.add_argument("--iters", type=int, default=10000)
    p.add_argument("--cap", type=int, default=4096)
    p.add_argument("--coupling", help="write the optimal coupling as CSV")
    p.set_defaults(func=cmd_transport)

    p = sub.add_parser("bounds", help="evaluate bound formulas")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--dobrushin", action="store_true")
    g.add_argument("--theorem2", action="store_true")
    g.add_argument("--gain", action="store_true")
    g.add_argument("--statement1", action="store_true")
    g.add_argument("--statement2", action="store_true")
    g.add_argument("--series", help="CSV with columns t,A,rho2sup[,measured]")
    p.add_argument("--H", type=float, default=0.0)
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--w1", type=float, default=1.0)
    p.add_argument("--d", type=int, choices=(2, 3), default=2)
    p.add_argument("--omega", type=float, default=0.0)
    p.add_argument("--w2sq", type=float, default=1e-4)
    p.add_argument("--jint", type=float, default=0.0)
    p.add_argument("--bsup", type=float, default=0.0)
    p.add_argument("--bhol", type=float, default=0.0)
    p.add_argument("--cd", type=float, default=1.0)
    p.add_argument("--Cd", type=float, default=1.0)
    p.add_argument("--c0", type=float, default=DEFAULT_C0)
    p.add_argument("--tolerance", type=float, default=0.01)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("selftest", help="run the invariant checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
