"""Characteristic flows.

Constant field B = (0, 0, omega): velocities rotate in the (1, 2) plane and
the exact free flow is available in closed form. Backward free flow to time
zero reads X + (D(t)/omega) V with V rotated by R(t); both matrices are
evaluated with half-angle forms so that no cancellation occurs for small
omega*t, and a short Taylor series takes over below ``SMALL_PHASE``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ensemble import PhaseEnsemble, interpolate_grid
from .fields import FieldSample, eval_B
from .geometry import torus_wrap

SMALL_PHASE = 1e-4


def _sin_over(omega, t):
    """sin(omega t) / omega, finite as omega -> 0."""
    x = omega * t
    if abs(x) < SMALL_PHASE:
        return t * (1.0 - x * x / 6.0 + x**4 / 120.0)
    return t * np.sinc(x / np.pi)


def _one_minus_cos_over(omega, t):
    """(1 - cos(omega t)) / omega = 2 sin^2(omega t / 2) / omega."""
    x = omega * t
    if abs(x) < SMALL_PHASE:
        return t * (x / 2.0 - x**3 / 24.0)
    s = np.sinc(x / (2 * np.pi))
    return t * 0.5 * x * s * s


def rotation(omega: float, t: float, d: int) -> np.ndarray:
    """R(t): rotation by angle omega*t in the (1, 2) plane; identity on e3."""
    if d not in (2, 3):
        raise ValueError("dimension must be 2 or 3")
    c, s = np.cos(omega * t), np.sin(omega * t)
    r = np.eye(d)
    r[:2, :2] = [[c, -s], [s, c]]
    return r


def drift_matrix(omega: float, t: float, d: int) -> np.ndarray:
    """D(t)/omega, the linear map with X(0) = X(t) + (D(t)/omega) V(t) under free flow."""
    if d not in (2, 3):
        raise ValueError("dimension must be 2 or 3")
    so = _sin_over(omega, t)
    co = _one_minus_cos_over(omega, t)
    m = np.zeros((d, d))
    m[:2, :2] = [[-so, co], [-co, -so]]
    if d == 3:
        m[2, 2] = -t
    return m


def drift_apply(omega: float, t: float, v) -> np.ndarray:
    """(D(t)/omega) v for one velocity or an ``(N, d)`` array."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    v = np.asarray(v, dtype=float)
    return v @ drift_matrix(omega, t, v.shape[-1]).T


def free_flow(omega: float, s: float, t: float, x, v):
    """State at time ``s`` of the magnetized free transport through (x, v) at time ``t``.

    Positions are wrapped to the torus; ``x`` and ``v`` may be single vectors
    or ``(N, d)`` arrays.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    d = v.shape[-1]
    if d not in (2, 3):
        raise ValueError("dimension must be 2 or 3")
    tau = s - t
    so = _sin_over(omega, tau)
    co = _one_minus_cos_over(omega, tau)
    c, sn = np.cos(omega * tau), np.sin(omega * tau)
    v1, v2 = v[..., 0], v[..., 1]
    vn = np.empty_like(v)
    vn[..., 0] = v1 * c + v2 * sn
    vn[..., 1] = -v1 * sn + v2 * c
    xn = np.empty_like(v)
    xn[..., 0] = x[..., 0] + v1 * so + v2 * co
    xn[..., 1] = x[..., 1] - v1 * co + v2 * so
    if d == 3:
        vn[..., 2] = v[..., 2]
        xn[..., 2] = x[..., 2] + v[..., 2] * tau
    return torus_wrap(xn), vn


def renormalized_position(omega: float, t: float, X, V) -> np.ndarray:
    """X + (D(t)/omega) V, left unwrapped; compare with the minimal image."""
    return np.asarray(X, dtype=float) + drift_apply(omega, t, V)


# --- trajectories ---------------------------------------------------------------


@dataclass
class Trajectory:
    """Sampled states of one ensemble: ``positions``/``velocities`` are ``(S, N, d)``."""

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size == 0 or self.times[0] != 0.0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must start at 0 and increase strictly")

    @classmethod
    def from_states(cls, times, states, weights=None) -> "Trajectory":
        xs = np.stack([s[0] for s in states])
        vs = np.stack([s[1] for s in states])
        return cls(np.asarray(times, dtype=float), xs, vs, weights)

    def index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not a sample of this trajectory")
        return i

    def state(self, t: float):
        i = self.index(t)
        return self.positions[i], self.velocities[i]

    def ensemble(self, t: float) -> PhaseEnsemble:
        x, v = self.state(t)
        w = self.weights if self.weights is not None else np.full(x.shape[0], 1.0 / x.shape[0])
        return PhaseEnsemble(x, v, w)


def save_trajectory(traj: Trajectory, path) -> None:
    d = traj.positions.shape[-1]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "particle_id"] + [f"x{k + 1}" for k in range(d)] + [f"v{k + 1}" for k in range(d)])
        for t, xs, vs in zip(traj.times, traj.positions, traj.velocities):
            for pid, (x, v) in enumerate(zip(xs, vs)):
                wr.writerow([f"{t:.17g}", pid] + [f"{a:.17g}" for a in x] + [f"{a:.17g}" for a in v])


# --- steppers ---------------------------------------------------------------------


def kick_rotate_kick(x, v, force, omega, dt, force_fn: Callable | None = None):
    """Array form of one splitting step; returns (x, v, force at the new positions)."""
    v_half = v + 0.5 * dt * force
    x_new, v_rot = free_flow(omega, dt, 0.0, x, v_half)
    f_new = force if force_fn is None else force_fn(x_new)
    return x_new, v_rot + 0.5 * dt * f_new, f_new


def push_constant_B(ens: PhaseEnsemble, force, omega: float, dt: float, force_fn: Callable | None = None) -> PhaseEnsemble:
    """Half kick, exact magnetized free flow over dt, half kick.

    Without ``force_fn`` the supplied force is used for both kicks; with it the
    second kick uses ``force_fn(new_positions)``.
    """
    if dt <= 0:
        raise ValueError("time step must be positive")
    x, v, _ = kick_rotate_kick(ens.x, ens.v, np.asarray(force, dtype=float), omega, dt, force_fn)
    return ens.replace(x=x, v=v)


def _as_efield(E) -> Callable:
    if E is None:
        return lambda t, x: np.zeros_like(x)
    if isinstance(E, FieldSample):
        return lambda t, x: interpolate_grid(E.efield, torus_wrap(x))
    if callable(E):
        return E
    raise TypeError("E must be a FieldSample, a callable E(t, x), or None")


def lorentz_rhs(efield: Callable, bmodel, d: int):
    def rhs(t, x, v):
        b = eval_B(bmodel, t, torus_wrap(x))
        if d == 2:
            vxb = np.column_stack([v[:, 1] * b[:, 2], -v[:, 0] * b[:, 2]])
        else:
            vxb = np.cross(v, b)
        return v, efield(t, x) + vxb

    return rhs


def rk4_step(rhs, t, x, v, dt):
    k1x, k1v = rhs(t, x, v)
    k2x, k2v = rhs(t + dt / 2, x + dt / 2 * k1x, v + dt / 2 * k1v)
    k3x, k3v = rhs(t + dt / 2, x + dt / 2 * k2x, v + dt / 2 * k2v)
    k4x, k4v = rhs(t + dt, x + dt * k3x, v + dt * k3v)
    x_new = x + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
    v_new = v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return x_new, v_new


def push_nonuniform_B(ens: PhaseEnsemble, E, bmodel, t: float, dt: float) -> PhaseEnsemble:
    """One classical Runge-Kutta step of x' = v, v' = E(t, x) + v x B(t, x).

    ``E`` may be a grid ``FieldSample`` (multilinear interpolation), a callable
    ``E(t, x) -> (N, d)``, or ``None`` for zero field.
    """
    if dt <= 0:
        raise ValueError("time step must be positive")
    rhs = lorentz_rhs(_as_efield(E), bmodel, ens.dimension)
    x, v = rk4_step(rhs, t, ens.x, ens.v, dt)
    return ens.replace(x=torus_wrap(x), v=v)


# --- velocity bound ---------------------------------------------------------------


@dataclass
class VelocityBoundReport:
    times: np.ndarray
    bound: np.ndarray  # (S, N)
    speed: np.ndarray  # (S, N)

    @property
    def slack(self) -> np.ndarray:
        return self.bound - self.speed

    @property
    def min_slack(self) -> float:
        return float(self.slack.min())

    def passed(self, tol: float = 1e-6) -> bool:
        return self.min_slack >= -tol


def velocity_bound_check(traj: Trajectory, esup, bsup: float) -> VelocityBoundReport:
    """|V(t)| <= |v| e^{t Bsup} + int_0^t Esup(s) e^{(t-s) Bsup} ds at every sample.

    The time integral uses the trapezoid rule on the trajectory's sample grid.
    """
    esup = np.asarray(esup, dtype=float)
    t = traj.times
    if esup.shape != t.shape:
        raise ValueError("Esup must be sampled on the trajectory times")
    v0 = np.linalg.norm(traj.velocities[0], axis=-1)
    speed = np.linalg.norm(traj.velocities, axis=-1)
    forcing = np.zeros_like(t)
    for i in range(1, t.size):
        integrand = esup[: i + 1] * np.exp((t[i] - t[: i + 1]) * bsup)
        forcing[i] = np.trapezoid(integrand, t[: i + 1])
    bound = v0[None, :] * np.exp(t * bsup)[:, None] + forcing[:, None]
    return VelocityBoundReport(t, bound, speed)
