"""Weighted particle clouds on T^d x R^d and the grid densities they induce."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from .geometry import torus_wrap, tree_sum

WEIGHT_TOL = 1e-12
MASS_TOL = 1e-10


class ConfigError(ValueError):
    """Raised for unresolvable names or malformed configuration values."""


class PhaseParticle(NamedTuple):
    position: np.ndarray
    velocity: np.ndarray
    weight: float


@dataclass(frozen=True, eq=False)
class PhaseEnsemble:
    """Empirical probability measure on phase space.

    Arrays are stored read-only: ``x`` and ``v`` have shape ``(N, d)`` and
    ``w`` has shape ``(N,)`` with positive entries summing to one.
    """

    x: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float, ndmin=2)
        v = np.array(self.v, dtype=float, ndmin=2)
        w = np.array(self.w, dtype=float, ndmin=1)
        if x.shape != v.shape or x.shape[0] != w.shape[0]:
            raise ValueError(f"shape mismatch: x{x.shape} v{v.shape} w{w.shape}")
        if x.shape[1] not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {x.shape[1]}")
        if not np.all(np.isfinite(v)):
            raise ValueError("velocities must be finite")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if abs(tree_sum(w) - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {tree_sum(w)!r}, expected 1")
        x = torus_wrap(x)
        for a in (x, v, w):
            a.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)

    @property
    def dimension(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return self.x.shape[0]

    def particle(self, i: int) -> PhaseParticle:
        return PhaseParticle(self.x[i], self.v[i], float(self.w[i]))

    def replace(self, x=None, v=None) -> "PhaseEnsemble":
        return PhaseEnsemble(self.x if x is None else x, self.v if v is None else v, self.w)

    @classmethod
    def equal_weights(cls, x, v) -> "PhaseEnsemble":
        n = np.asarray(x).shape[0]
        return cls(x, v, np.full(n, 1.0 / n))


# --- sampling -----------------------------------------------------------------


def _uniform_zero(rng, n, d, **_):
    return rng.random((n, d)), np.zeros((n, d))


def _maxwellian(rng, n, d, sigma=1.0, drift=0.0, **_):
    x = rng.random((n, d))
    v = drift + sigma * rng.standard_normal((n, d))
    return x, v


def _landau(rng, n, d, sigma=1.0, alpha=0.1, mode=1, **_):
    """x1 density 1 + alpha cos(2 pi mode x1) by rejection, Maxwellian velocities."""
    if not 0 <= alpha < 1:
        raise ConfigError("landau alpha must lie in [0, 1)")
    x1 = np.empty(0)
    while x1.size < n:
        cand = rng.random(2 * n)
        accept = rng.random(2 * n) * (1 + alpha) < 1 + alpha * np.cos(2 * np.pi * mode * cand)
        x1 = np.concatenate([x1, cand[accept]])
    x = rng.random((n, d))
    x[:, 0] = x1[:n]
    v = sigma * rng.standard_normal((n, d))
    return x, v


def _two_stream(rng, n, d, sigma=0.1, speed=1.0, **_):
    x = rng.random((n, d))
    v = sigma * rng.standard_normal((n, d))
    v[:, 0] += np.where(np.arange(n) % 2 == 0, speed, -speed)
    return x, v


FAMILIES = {
    "uniform_zero": _uniform_zero,
    "maxwellian": _maxwellian,
    "landau": _landau,
    "two_stream": _two_stream,
}


def sample_ensemble(family: str, n: int, seed: int, d: int = 2, **params) -> PhaseEnsemble:
    """Draw ``n`` equal-weight particles from a named initial-condition family.

    The result depends only on ``(family, params, n, seed, d)``.
    """
    if n < 1:
        raise ValueError("particle count must be at least 1")
    try:
        make = FAMILIES[family]
    except KeyError:
        raise ConfigError(f"unknown initial-condition family {family!r}; known: {sorted(FAMILIES)}") from None
    rng = np.random.default_rng(seed)
    x, v = make(rng, n, d, **params)
    return PhaseEnsemble.equal_weights(x, v)


# --- grid densities -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Nodal density values on an ``n^d`` grid with spacing ``1/n``.

    Node ``i`` sits at ``i/n``; the cell-average of ``values`` is the total mass.
    """

    values: np.ndarray

    def __post_init__(self):
        a = np.array(self.values, dtype=float)
        if a.ndim not in (2, 3) or len(set(a.shape)) != 1:
            raise ValueError(f"density grid must be n^d with d in (2, 3), got shape {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "values", a)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dimension(self) -> int:
        return self.values.ndim

    @property
    def cell_volume(self) -> float:
        return float(self.n) ** (-self.dimension)

    def mass(self) -> float:
        return float(tree_sum(self.values.ravel()) * self.cell_volume)

    def nodes(self) -> np.ndarray:
        """Node coordinates as an ``(n, ..., n, d)`` array."""
        axes = [np.arange(self.n) / self.n] * self.dimension
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    @classmethod
    def from_function(cls, func, n: int, d: int) -> "DensityGrid":
        axes = [np.arange(n) / n] * d
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return cls(func(pts))


def _cic_stencil(x: np.ndarray, n: int):
    """Yield (flat node index, weight) for each of the 2^d multilinear corners."""
    d = x.shape[1]
    g = x * n
    base = np.floor(g).astype(np.int64)
    frac = g - base
    base %= n
    for corner in range(2**d):
        idx = np.zeros(x.shape[0], dtype=np.int64)
        wgt = np.ones(x.shape[0])
        for k in range(d):
            bit = (corner >> k) & 1
            idx = idx * n + (base[:, k] + bit) % n
            wgt = wgt * (frac[:, k] if bit else 1.0 - frac[:, k])
        yield idx, wgt


def deposit_density(ens: PhaseEnsemble, n: int) -> DensityGrid:
    """Cloud-in-cell deposition with periodic wrapping; integrates to the ensemble mass."""
    return deposit_arrays(ens.x, ens.w, n)


def deposit_arrays(x: np.ndarray, w: np.ndarray, n: int) -> DensityGrid:
    if n < 2:
        raise ValueError("grid resolution must be at least 2")
    d = x.shape[1]
    acc = np.zeros(n**d)
    for idx, wgt in _cic_stencil(x, n):
        # bincount accumulates sequentially in particle order
        acc += np.bincount(idx, weights=wgt * w, minlength=n**d)
    return DensityGrid(acc.reshape((n,) * d) * float(n) ** d)


def interpolate_grid(field: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Multilinear gather of nodal values at positions ``x``.

    ``field`` has shape ``(n,)*d`` or ``(n,)*d + (m,)`` for vector fields.
    """
    d = x.shape[1]
    n = field.shape[0]
    flat = field.reshape((n**d,) + field.shape[d:])
    out = np.zeros((x.shape[0],) + field.shape[d:])
    for idx, wgt in _cic_stencil(x, n):
        out += flat[idx] * (wgt if flat.ndim == 1 else wgt[:, None])
    return out


def lp_norm(g: DensityGrid, p: float) -> float:
    """L^p norm on the unit torus with cell-volume quadrature; ``p=inf`` gives the max."""
    if p < 1:
        raise ValueError("p must be >= 1")
    a = np.abs(g.values).ravel()
    if np.isinf(p):
        return float(a.max())
    return float((tree_sum(a**p) * g.cell_volume) ** (1.0 / p))


# --- velocity moments ----------------------------------------------------------


def velocity_moment(ens: PhaseEnsemble, k: float) -> float:
    """Weighted moment of the speed: sum_i w_i |v_i|^k."""
    if k < 1:
        raise ValueError("moment order must be >= 1")
    speed = np.linalg.norm(ens.v, axis=1)
    return float(tree_sum(ens.w * speed**k))


def gaussian_speed_moment(k: float, d: int, sigma: float = 1.0) -> float:
    """E|v|^k for v ~ N(0, sigma^2 I_d)."""
    return float(np.exp(k / 2 * np.log(2.0) + gammaln((d + k) / 2) - gammaln(d / 2)) * sigma**k)


class MomentVerdict(NamedTuple):
    passed: bool
    first_failure: int | None
    moments: tuple


def moment_condition_check(ens: PhaseEnsemble, c0: float, k_max: int) -> MomentVerdict:
    """Check sum_i w_i |v_i|^k <= (c0 k)^k for k = 1..k_max."""
    if c0 <= 0 or k_max < 1:
        raise ValueError("need c0 > 0 and k_max >= 1")
    moments = []
    for k in range(1, k_max + 1):
        m = velocity_moment(ens, k)
        moments.append(m)
        if m > (c0 * k) ** k:
            return MomentVerdict(False, k, tuple(moments))
    return MomentVerdict(True, None, tuple(moments))


# --- CSV ---------------------------------------------------------------------


def save_ensemble(ens: PhaseEnsemble, path) -> None:
    d = ens.dimension
    header = [f"x{i + 1}" for i in range(d)] + [f"v{i + 1}" for i in range(d)] + ["w"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in np.column_stack([ens.x, ens.v, ens.w]):
            wr.writerow([f"{val:.17g}" for val in row])


def load_ensemble(path) -> PhaseEnsemble:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty ensemble file")
    header, body = rows[0], rows[1:]
    ncol = len(header)
    if ncol not in (5, 7) or header[-1] != "w":
        raise ConfigError(f"{path}: unexpected header {header}")
    d = (ncol - 1) // 2
    data = np.array(body, dtype=float).reshape(-1, ncol)
    w = data[:, -1]
    # 17 significant digits round-trip exactly, but hand-written files may not
    w = w / w.sum() if abs(w.sum() - 1.0) > WEIGHT_TOL else w
    return PhaseEnsemble(data[:, :d], data[:, d : 2 * d], w)
