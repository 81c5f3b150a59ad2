"""Closed-form stability bounds, admissibility conditions, and a Grönwall ODE
integrator used to cross-check the double-exponential closures.

The dimensional constants ``c_d``, ``C_d`` and the smallness constant ``c0``
are not known in closed form; they are plain inputs defaulting to 1, 1 and
e^-2, and every report records the values used.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .geometry import tree_sum

SERIES_PHASE = 1e-2
DEFAULT_C0 = float(np.exp(-2.0))
Q_REGIME = 1.0 / np.e


def dobrushin_bound(H: float, t: float, w1_0: float) -> float:
    """e^{(1 + 2H) t} W1(0)."""
    if H < 0 or t < 0:
        raise ValueError("H and t must be nonnegative")
    return float(np.exp((1.0 + 2.0 * H) * t) * w1_0)


def _gyro_gap_sq(omega: float, t: float) -> float:
    """2 (1 - cos(omega t)) / omega^2, written as t^2 sinc^2 to avoid cancellation."""
    s = np.sinc(omega * t / (2 * np.pi))
    return float(t * t * s * s)


def _gyro_phase_integral(omega: float, t: float) -> float:
    """(t - sin(omega t)/omega) / omega^2, with its series below |omega t| = 1e-2."""
    x = omega * t
    if abs(x) < SERIES_PHASE:
        x2 = x * x
        return t**3 / 6.0 * (1 - x2 / 20 * (1 - x2 / 42 * (1 - x2 / 72 * (1 - x2 / 110))))
    return (t - np.sin(x) / omega) / omega**2


def theorem2_gain(d: int, omega: float, t: float) -> float:
    """Prefactor sqrt(2(1 - cos wt)/w^2 [+ t^2]) + 1 of the magnetized bound."""
    if d not in (2, 3):
        raise ValueError("dimension must be 2 or 3")
    if omega < 0 or t < 0:
        raise ValueError("omega and t must be nonnegative")
    sq = _gyro_gap_sq(omega, t) + (t * t if d == 3 else 0.0)
    return float(np.sqrt(sq) + 1.0)


def theorem2_exponent(d: int, H: float, omega: float, t: float) -> float:
    """4H (2 (t - sin(wt)/w)/w^2 + t [+ t^3/3])."""
    extra = t**3 / 3.0 if d == 3 else 0.0
    return float(4.0 * H * (2.0 * _gyro_phase_integral(omega, t) + extra + t))


def theorem2_bound(d: int, H: float, omega: float, t: float, w1_0: float) -> float:
    """min(gain * e^{exponent}, e^{(1+2H)t}) * W1(0)."""
    magnetized = theorem2_gain(d, omega, t) * np.exp(theorem2_exponent(d, H, omega, t))
    return float(min(magnetized, np.exp((1.0 + 2.0 * H) * t)) * w1_0)


# --- W2 stability ingredients for the Poisson case -------------------------------------


def cumulative_trapezoid(y, t) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


class JValue(NamedTuple):
    value: float
    step: float


def _phi1(z):
    """(e^z - 1)/z."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    series = 1 + z / 2 + z * z / 6 + z**3 / 24
    return np.where(small, series, np.expm1(zs) / zs)


def _phi2(z):
    """int_0^1 sigma e^{z sigma} d sigma = (e^z (z - 1) + 1)/z^2."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    series = 0.5 + z / 3 + z * z / 8 + z**3 / 30
    return np.where(small, series, (np.expm1(zs) * (zs - 1) + zs) / (zs * zs))


def _exp_weighted_integral(u, f, s, rate):
    """int_{u0}^{s} f(u) e^{(s - u) rate} du for f piecewise linear on the nodes ``u``.

    Exact for the interpolant, so the only error is the sampling of f itself.
    """
    h = np.diff(u)
    z = -rate * h
    lead = np.exp(rate * (s - u[:-1]))
    seg = lead * h * (f[:-1] * _phi1(z) + (f[1:] - f[:-1]) * _phi2(z))
    return float(tree_sum(seg)) if seg.size else 0.0


def j_integrand(s: float, times, A, rho2sup, bsup: float, bhol: float) -> JValue:
    """J(s) = A(s) + Bhol (e^{s Bsup} + int_0^s (1 + rho2sup(u)) e^{(s-u) Bsup} du).

    ``A`` and ``rho2sup`` are sampled on ``times``; ``s`` must be one of the
    samples. The inner integral treats ``rho2sup`` as piecewise linear between
    samples and integrates the exponential weight exactly; ``step`` is the
    largest grid spacing used, for attributing sampling error.
    """
    times = np.asarray(times, dtype=float)
    i = int(np.argmin(np.abs(times - s)))
    if abs(times[i] - s) > 1e-12 * max(1.0, s):
        raise ValueError("s must be a sample time of the series")
    A = np.asarray(A, dtype=float)
    r = np.asarray(rho2sup, dtype=float)
    u = times[: i + 1]
    inner = _exp_weighted_integral(u, 1.0 + r[: i + 1], times[i], bsup)
    step = float(np.diff(u).max()) if i else 0.0
    return JValue(float(A[i] + bhol * (np.exp(s * bsup) + inner)), step)


def j_series(times, A, rho2sup, bsup: float, bhol: float) -> np.ndarray:
    return np.array([j_integrand(s, times, A, rho2sup, bsup, bhol).value for s in times])


class Statement(NamedTuple):
    admissible: bool
    rhs: Callable[[float], float]
    reason: str


def statement1_check(w2sq_0: float, j_total: float, c_d: float = 1.0) -> Statement:
    """Loeper-type closure.

    Admissible iff W2^2(0) < e^-2 and |log W2^2(0)| >= exp(c_d int_0^T J).
    ``rhs(I)`` takes the running integral I = int_0^t J and returns
    exp(log(W2^2(0)) exp(-c_d I)).
    """
    if w2sq_0 <= 0:
        raise ValueError("W2^2(0) must be positive")
    reasons = []
    if w2sq_0 >= np.exp(-2.0):
        reasons.append("W2^2(0) >= e^-2")
    if abs(np.log(w2sq_0)) < np.exp(c_d * j_total):
        reasons.append("|log W2^2(0)| < exp(c_d int J)")
    log0 = np.log(w2sq_0)

    def rhs(running):
        return float(np.exp(log0 * np.exp(-c_d * running)))

    return Statement(not reasons, rhs, "; ".join(reasons) or "ok")


def statement2_radius(w2sq_0: float) -> float:
    """sqrt|log(W |log(W/2)|)| for W = W2^2(0); requires W |log(W/2)| < 1."""
    inner = w2sq_0 * abs(np.log(0.5 * w2sq_0))
    return float(np.sqrt(abs(np.log(inner))))


def statement2_check(w2sq_0: float, j_total: float, C_d: float = 1.0, c0: float = DEFAULT_C0) -> Statement:
    """Kinetic-Wasserstein closure.

    Admissible iff W2^2(0) < c0, W |log(W/2)| < 1, and the radius
    sqrt|log(W |log(W/2)|)| >= C_d int_0^T J + 1. ``rhs(I)`` returns
    2 exp(-(radius - C_d I)^2).
    """
    if w2sq_0 <= 0:
        raise ValueError("W2^2(0) must be positive")
    reasons = []
    if w2sq_0 >= c0:
        reasons.append(f"W2^2(0) >= c0 = {c0:g}")
    inner = w2sq_0 * abs(np.log(0.5 * w2sq_0))
    if inner >= 1.0:
        reasons.append("W |log(W/2)| >= 1: outer logarithm changes sign")
    radius = statement2_radius(w2sq_0)
    if radius < C_d * j_total + 1.0:
        reasons.append("radius < C_d int J + 1")

    def rhs(running):
        return float(2.0 * np.exp(-((radius - C_d * running) ** 2)))

    return Statement(not reasons, rhs, "; ".join(reasons) or "ok")


def efield_condition_check(times, A):
    """Integrability of A on [0, T]: (passed, trapezoid integral)."""
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        return False, float("inf")
    return True, float(np.trapezoid(A, np.asarray(times, dtype=float)))


# --- Grönwall ODE -----------------------------------------------------------------


class GronwallSolution(NamedTuple):
    times: np.ndarray
    Q: np.ndarray
    in_regime: bool


def gronwall_ode_solve(kind: str, J, Q0: float, t_grid, rate: float = 1.0) -> GronwallSolution:
    """Integrate Q' = rate J(t) Q |log Q| ("loglinear") or Q' = rate J(t) Q sqrt|log Q| ("sqrtlog").

    ``J`` is a callable or an array sampled on ``t_grid``; arrays are linearly
    interpolated at the half steps. Classical fourth-order Runge-Kutta. If Q
    reaches 1/e the run stops and ``in_regime`` is False.
    """
    if kind not in ("loglinear", "sqrtlog"):
        raise ValueError("kind must be 'loglinear' or 'sqrtlog'")
    if not 0 < Q0 < Q_REGIME:
        raise ValueError("Q0 must lie in (0, 1/e)")
    t_grid = np.asarray(t_grid, dtype=float)
    if callable(J):
        jf = J
    elif np.ndim(J) == 0:
        jf = lambda s, c=float(J): c
    else:
        js = np.asarray(J, dtype=float)
        jf = lambda s: np.interp(s, t_grid, js)
    phi = (lambda q: q * abs(np.log(q))) if kind == "loglinear" else (lambda q: q * np.sqrt(abs(np.log(q))))

    def f(s, q):
        return rate * jf(s) * phi(q)

    out = np.full(t_grid.shape, np.nan)
    out[0] = q = Q0
    for i in range(1, t_grid.size):
        s, h = t_grid[i - 1], t_grid[i] - t_grid[i - 1]
        k1 = f(s, q)
        k2 = f(s + h / 2, q + h / 2 * k1)
        k3 = f(s + h / 2, q + h / 2 * k2)
        k4 = f(s + h, q + h * k3)
        q = q + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not 0 < q < Q_REGIME:
            return GronwallSolution(t_grid, out, False)
        out[i] = q
    return GronwallSolution(t_grid, out, True)


# --- reports ----------------------------------------------------------------------


@dataclass
class BoundReport:
    """Measured values against a bound on a shared time grid.

    A sample passes iff ``measured <= bound * (1 + tolerance)``. ``regime``
    is "ok" or the reason the bound's hypotheses fail for these inputs; such
    reports are still evaluated but flagged as outside their regime.
    """

    name: str
    times: np.ndarray
    measured: np.ndarray
    bound: np.ndarray
    tolerance: float = 0.01
    inputs: dict = field(default_factory=dict)
    label: str = "quantitative"
    regime: str = "ok"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.measured = np.asarray(self.measured, dtype=float)
        self.bound = np.asarray(self.bound, dtype=float)

    @property
    def slack(self) -> np.ndarray:
        return self.bound * (1.0 + self.tolerance) - self.measured

    @property
    def verdicts(self) -> np.ndarray:
        return self.slack >= 0

    @property
    def passed(self) -> bool:
        return bool(np.all(self.verdicts))

    def summary(self) -> str:
        worst = float(np.max(self.measured / np.where(self.bound > 0, self.bound, np.inf)))
        status = "PASS" if self.passed else "FAIL"
        text = (f"{self.name} [{self.label}]: {status} over {self.times.size} samples, "
                f"max measured/bound = {worst:.6g}, tolerance = {self.tolerance:g}")
        if self.regime != "ok":
            text += f" (outside regime: {self.regime})"
        return text

    def save(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# bound = {self.name}\n# label = {self.label}\n# tolerance = {self.tolerance!r}\n")
            fh.write(f"# regime = {self.regime}\n")
            for k, v in self.inputs.items():
                fh.write(f"# {k} = {v}\n")
            wr = csv.writer(fh)
            wr.writerow(["t", "measured", "bound", "slack", "verdict"])
            for t, m, b, s, ok in zip(self.times, self.measured, self.bound, self.slack, self.verdicts):
                wr.writerow([f"{t:.17g}", f"{m:.17g}", f"{b:.17g}", f"{s:.17g}", "pass" if ok else "fail"])
