"""Phase-space Wasserstein distances, couplings, and coupling functionals.

Costs: p=1 uses |dx|_T + |dv|; p=2 uses |dx|_T^2 + |dv|^2 under a square root.
Position differences always take the minimal image on the torus.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog
from scipy.special import logsumexp

from .ensemble import PhaseEnsemble
from .flow import Trajectory, renormalized_position
from .geometry import minimal_image, tree_sum

DEFAULT_CAP = 4096
Q_REGIME = 1.0 / np.e


class CapacityError(RuntimeError):
    pass


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class PhaseMetricConfig:
    p: int = 1
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if self.p not in (1, 2):
            raise ValueError("only p = 1 and p = 2 are supported")


@dataclass(frozen=True, eq=False)
class Coupling:
    """Sparse transport plan: ``mass[k]`` moves from ``source[k]`` to ``target[k]``."""

    source: np.ndarray
    target: np.ndarray
    mass: np.ndarray

    @classmethod
    def identity(cls, w) -> "Coupling":
        n = len(w)
        return cls(np.arange(n), np.arange(n), np.asarray(w, dtype=float))

    def marginals(self, n_source: int, n_target: int):
        rows = np.bincount(self.source, weights=self.mass, minlength=n_source)
        cols = np.bincount(self.target, weights=self.mass, minlength=n_target)
        return rows, cols

    def check(self, a: PhaseEnsemble, b: PhaseEnsemble, tol: float = 1e-10) -> None:
        rows, cols = self.marginals(len(a), len(b))
        if np.any(self.mass < 0):
            raise ValueError("negative coupling mass")
        if np.abs(rows - a.w).max() > tol or np.abs(cols - b.w).max() > tol:
            raise ValueError("coupling marginals do not match ensemble weights")


def save_coupling(c: Coupling, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["i", "j", "mass"])
        for i, j, m in zip(c.source, c.target, c.mass):
            wr.writerow([int(i), int(j), f"{m:.17g}"])


def load_coupling(path) -> Coupling:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Coupling(data[:, 0].astype(int), data[:, 1].astype(int), data[:, 2])


def pair_cost(xa, va, xb, vb, p: int) -> np.ndarray:
    """Cost between paired states; arrays broadcast over leading axes."""
    dx = np.linalg.norm(minimal_image(xa - xb), axis=-1)
    dv = np.linalg.norm(va - vb, axis=-1)
    return dx + dv if p == 1 else dx**2 + dv**2


def cost_matrix(a: PhaseEnsemble, b: PhaseEnsemble, p: int) -> np.ndarray:
    return pair_cost(a.x[:, None, :], a.v[:, None, :], b.x[None, :, :], b.v[None, :, :], p)


def _equal_uniform(a: PhaseEnsemble, b: PhaseEnsemble) -> bool:
    return len(a) == len(b) and np.all(a.w == a.w[0]) and np.all(b.w == b.w[0])


def wasserstein_exact(a: PhaseEnsemble, b: PhaseEnsemble, cfg: PhaseMetricConfig = PhaseMetricConfig()):
    """Exact W_p between two empirical measures and an optimal coupling.

    Equal-size uniform-weight clouds go through an optimal assignment; anything
    else through the transport linear program.
    """
    if a.dimension != b.dimension:
        raise ValueError("ensembles must share the dimension")
    if len(a) + len(b) > cfg.cap:
        raise CapacityError(
            f"combined size {len(a) + len(b)} exceeds the exact-solver cap {cfg.cap}; "
            "use wasserstein_entropic for large clouds"
        )
    c = cost_matrix(a, b, cfg.p)
    if _equal_uniform(a, b):
        rows, cols = linear_sum_assignment(c)
        plan = Coupling(rows, cols, a.w.copy())
    else:
        plan = _transport_lp(c, a.w, b.w)
    total = tree_sum(plan.mass * c[plan.source, plan.target])
    return float(max(total, 0.0) ** (1.0 / cfg.p)), plan


def _transport_lp(c, wa, wb) -> Coupling:
    m, n = c.shape
    # variable k = i * n + j; one row per source and one per target marginal
    k = np.arange(m * n)
    rows = np.concatenate([k // n, m + k % n])
    a_eq = sparse.csr_matrix((np.ones(2 * m * n), (rows, np.concatenate([k, k]))), shape=(m + n, m * n))
    res = linprog(
        c.ravel(), A_eq=a_eq, b_eq=np.concatenate([wa, wb]),
        bounds=(0, None), method="highs",
    )
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    flat = res.x.reshape(m, n)
    i, j = np.nonzero(flat > 1e-15)
    return Coupling(i, j, flat[i, j])


class EntropicResult(NamedTuple):
    distance: float
    epsilon: float
    iterations: int
    converged: bool
    plan: np.ndarray


def wasserstein_entropic(a: PhaseEnsemble, b: PhaseEnsemble, cfg: PhaseMetricConfig = PhaseMetricConfig(),
                         epsilon: float = 1e-2, iters: int = 10000, tol: float = 1e-9) -> EntropicResult:
    """Log-domain Sinkhorn estimate of W_p, rounded onto the exact coupling polytope.

    The regularization is annealed from the cost scale down to ``epsilon``
    (halving, with a loose marginal tolerance) to warm-start the potentials.
    ``iters`` caps the total number of sweeps. The returned distance is the
    primal cost of a feasible plan, so it never undercuts the exact value.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    c = cost_matrix(a, b, cfg.p)
    loga, logb = np.log(a.w), np.log(b.w)
    f = np.zeros(len(a))
    g = np.zeros(len(b))

    def log_plan(eps):
        return (f[:, None] + g[None, :] - c) / eps + loga[:, None] + logb[None, :]

    eps = max(float(c.max()), epsilon)
    converged = False
    it = 0
    while it < iters:
        final = eps == epsilon
        stop = tol if final else 1e-3
        while it < iters:
            it += 1
            f = -eps * logsumexp((g[None, :] - c) / eps + logb[None, :], axis=1)
            g = -eps * logsumexp((f[:, None] - c) / eps + loga[:, None], axis=0)
            if it % 10 == 0 and np.abs(np.exp(logsumexp(log_plan(eps), axis=1)) - a.w).sum() < stop:
                converged = final
                break
        if final:
            break
        eps = max(0.5 * eps, epsilon)
    # if the budget ran out mid-anneal the current potentials belong to eps
    plan = _round_to_polytope(np.exp(log_plan(eps)), a.w, b.w)
    if not converged:
        warnings.warn(f"Sinkhorn did not converge in {iters} iterations (epsilon={epsilon})", RuntimeWarning)
    cost = float(np.sum(plan * c))
    return EntropicResult(cost ** (1.0 / cfg.p), epsilon, it, converged, plan)


def _round_to_polytope(p, r, c):
    """Project an approximate plan onto exact marginals (r, c) without raising any entry's cost bound."""
    x = np.minimum(r / np.maximum(p.sum(axis=1), 1e-300), 1.0)
    p = p * x[:, None]
    y = np.minimum(c / np.maximum(p.sum(axis=0), 1e-300), 1.0)
    p = p * y[None, :]
    err_r = r - p.sum(axis=1)
    err_c = c - p.sum(axis=0)
    if err_r.sum() > 0:
        p = p + np.outer(err_r, err_c) / err_r.sum()
    return p


# --- functionals along trajectories ---------------------------------------------------


def _paired(pi0: Coupling, ta: Trajectory, tb: Trajectory, t: float):
    xa, va = ta.state(t)
    xb, vb = tb.state(t)
    return xa[pi0.source], va[pi0.source], xb[pi0.target], vb[pi0.target]


def dobrushin_functional(pi0: Coupling, ta: Trajectory, tb: Trajectory, t: float) -> float:
    """sum over pi0 of mass * (|X1 - X2|_T + |V1 - V2|) at time t."""
    xa, va, xb, vb = _paired(pi0, ta, tb, t)
    return float(tree_sum(pi0.mass * pair_cost(xa, va, xb, vb, 1)))


def squared_gaps(pi0: Coupling, ta: Trajectory, tb: Trajectory, t: float):
    """(sum mass |dX|_T^2, sum mass |dV|^2) along the coupling at time t."""
    xa, va, xb, vb = _paired(pi0, ta, tb, t)
    dx2 = np.sum(minimal_image(xa - xb) ** 2, axis=-1)
    dv2 = np.sum((va - vb) ** 2, axis=-1)
    return float(tree_sum(pi0.mass * dx2)), float(tree_sum(pi0.mass * dv2))


def loeper_functional(pi0: Coupling, ta: Trajectory, tb: Trajectory, t: float, lam: float = 1.0) -> float:
    """Q = 1/2 sum mass (lam |dX|^2 + |dV|^2)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    a, b = squared_gaps(pi0, ta, tb, t)
    return 0.5 * (lam * a + b)


class KineticQ(NamedTuple):
    value: float
    in_regime: bool
    residual: float


def kinetic_q_fixed_point(a: float, b: float) -> KineticQ:
    """Root of Q = 1/2 (|log Q| a + b) on (0, 1/e), by bisection.

    The map Q -> Q - (|log Q| a + b)/2 is strictly increasing on (0, 1), so
    the root is unique when it exists. If the right endpoint is still negative
    the quantity has left the operating regime and the endpoint is returned
    with ``in_regime=False``.
    """
    if a < 0 or b < 0:
        raise ValueError("gaps must be nonnegative")
    if a == 0 and b == 0:
        raise DegenerateInputError("a = b = 0: the coupled states coincide and Q = 0")

    def g(q):
        if a == 0:
            return q - 0.5 * b
        return q - 0.5 * (abs(np.log(q)) * a + b)

    hi = Q_REGIME - 1e-12
    if g(hi) < 0:
        return KineticQ(hi, False, g(hi))
    if a == 0:
        q = 0.5 * b
        return KineticQ(q, True, g(q))
    lo = 1e-300
    if g(lo) > 0:
        return KineticQ(lo, True, g(lo))
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    q = lo if abs(g(lo)) < abs(g(hi)) else hi
    return KineticQ(q, True, g(q))


def kinetic_functional(pi0: Coupling, ta: Trajectory, tb: Trajectory, t: float) -> KineticQ:
    a, b = squared_gaps(pi0, ta, tb, t)
    return kinetic_q_fixed_point(a, b)


def renormalized_functional(pi0: Coupling, ta: Trajectory, tb: Trajectory, omega: float, t: float) -> float:
    """sum mass (|Xr1 - Xr2|_T + |V1 - V2|) with Xr = X + (D(t)/omega) V.

    Rotation preserves |V1 - V2|, so current velocities stand in for the
    renormalized ones.
    """
    xa, va, xb, vb = _paired(pi0, ta, tb, t)
    ra = renormalized_position(omega, t, xa, va)
    rb = renormalized_position(omega, t, xb, vb)
    return float(tree_sum(pi0.mass * pair_cost(ra, va, rb, vb, 1)))
