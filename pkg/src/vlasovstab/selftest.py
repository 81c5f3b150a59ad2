"""Fast invariant checks run by ``vlasovstab selftest``. Each check prints one line."""

from __future__ import annotations

import itertools
import math

import numpy as np

from .bounds import dobrushin_bound, gronwall_ode_solve, j_integrand, theorem2_bound, theorem2_gain
from .ensemble import PhaseEnsemble, deposit_density, sample_ensemble
from .fields import make_kernel, solve_poisson
from .flow import free_flow, push_constant_B, renormalized_position
from .geometry import minimal_image, tree_sum
from .transport import PhaseMetricConfig, cost_matrix, kinetic_q_fixed_point, wasserstein_exact


def _check_geometry(rng):
    d = rng.uniform(-3, 3, (100, 2))
    m = minimal_image(d)
    return bool(np.all(m >= -0.5) and np.all(m < 0.5) and np.allclose(np.round(d - m), d - m))


def _check_deposit(rng):
    ens = sample_ensemble("maxwellian", 500, int(rng.integers(1 << 30)), 2)
    return abs(deposit_density(ens, 16).mass() - 1.0) < 1e-10


def _check_poisson(rng):
    n = 64
    x1 = np.arange(n) / n
    rho = np.broadcast_to((1 + np.cos(2 * np.pi * x1))[:, None], (n, n))
    fs = solve_poisson(rho)
    U = np.cos(2 * np.pi * x1)[:, None] / (4 * np.pi**2)
    return float(np.abs(fs.potential - U).max()) < 1e-10


def _check_free_flow(rng):
    x, v = rng.random((8, 2)), rng.standard_normal((8, 2))
    ens = PhaseEnsemble.equal_weights(x, v)
    zero = np.zeros_like(x)
    for _ in range(100):
        ens = push_constant_B(ens, zero, 2.0, 1e-2)
    X, V = free_flow(2.0, 1.0, 0.0, x, v)
    return float(np.abs(minimal_image(ens.x - X)).max()) < 1e-10 and float(np.abs(ens.v - V).max()) < 1e-10


def _check_renormalized(rng):
    x, v = rng.random((8, 2)), rng.standard_normal((8, 2))
    X, V = free_flow(1.5, 0.7, 0.0, x, v)
    back = renormalized_position(1.5, 0.7, X, V)
    return float(np.abs(minimal_image(back - x)).max()) < 1e-12


def _check_transport(rng):
    n = 5
    a = PhaseEnsemble.equal_weights(rng.random((n, 2)), rng.standard_normal((n, 2)))
    b = PhaseEnsemble.equal_weights(rng.random((n, 2)), rng.standard_normal((n, 2)))
    c = cost_matrix(a, b, 1)
    brute = min(tree_sum(c[np.arange(n), list(p)]) for p in itertools.permutations(range(n))) / n
    return abs(wasserstein_exact(a, b, PhaseMetricConfig(p=1))[0] - brute) < 1e-9


def _check_bounds(rng):
    ok = abs(dobrushin_bound(0.0, 1.0, 1.0) - math.e) < 1e-15
    ok &= abs(theorem2_gain(2, 1e-8, 1.0) - 2.0) < 1e-6
    ok &= theorem2_bound(2, 0.5, 2.0, 1.0, 1.0) <= dobrushin_bound(0.5, 1.0, 1.0)
    jv = j_integrand(1.0, [0.0, 1.0], [2.0, 2.0], [1.0, 1.0], 1.0, 1.0)
    ok &= abs(jv.value - (2 + math.e + 2 * (math.e - 1))) < 1e-10
    return bool(ok)


def _check_kinetic(rng):
    return kinetic_q_fixed_point(0.0, 0.2).value == 0.1


def _check_gronwall(rng):
    sol = gronwall_ode_solve("loglinear", 1.0, math.exp(-4.0), np.linspace(0, 1, 1001))
    return abs(sol.Q[-1] - math.exp(-4 * math.exp(-1.0))) < 1e-8


def _check_kernel(rng):
    k = make_kernel("cos_product", amplitude=1.0)
    return k.hessian_bound == 1.0


CHECKS = [
    ("minimal image range", _check_geometry),
    ("deposit mass", _check_deposit),
    ("poisson manufactured", _check_poisson),
    ("free flow splitting", _check_free_flow),
    ("renormalized inverse", _check_renormalized),
    ("exact transport vs brute force", _check_transport),
    ("bound formulas", _check_bounds),
    ("kinetic fixed point a=0", _check_kinetic),
    ("gronwall loglinear", _check_gronwall),
    ("analytic kernel H", _check_kernel),
]


def run_selftest(seed: int = 0, verbose: bool = True) -> bool:
    rng = np.random.default_rng(seed)
    all_ok = True
    for name, check in CHECKS:
        try:
            ok = bool(check(rng))
        except Exception as exc:  # a crash is a failure, report and continue
            ok = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        all_ok &= ok
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return all_ok
