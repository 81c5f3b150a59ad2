"""Force models: spectral periodic Poisson solver, smooth interaction kernels,
and external magnetic fields with their sup and Hölder norms."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .ensemble import ConfigError, DensityGrid, PhaseEnsemble, lp_norm
from .geometry import minimal_image, torus_displacement, tree_sum

TWO_PI = 2.0 * np.pi
POISSON_MASS_TOL = 1e-8


# --- Poisson ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FieldSample:
    """Zero-mean potential and electric field ``E = -grad U`` on the grid.

    ``efield`` has shape ``(n,)*d + (d,)``.
    """

    potential: np.ndarray
    efield: np.ndarray

    @property
    def n(self) -> int:
        return self.potential.shape[0]

    @property
    def dimension(self) -> int:
        return self.potential.ndim

    def sup_norm(self) -> float:
        return float(np.linalg.norm(self.efield, axis=-1).max())


def _wavenumbers(n: int, d: int):
    k1 = TWO_PI * np.fft.fftfreq(n, d=1.0 / n)
    ks = np.meshgrid(*([k1] * d), indexing="ij")
    return ks


def mollify(rho: DensityGrid, delta: float) -> DensityGrid:
    """Gaussian smoothing of width ``delta`` applied in Fourier space; mass is unchanged."""
    if delta < 0:
        raise ValueError("mollification radius must be nonnegative")
    if delta == 0:
        return rho
    ks = _wavenumbers(rho.n, rho.dimension)
    k2 = sum(k * k for k in ks)
    smoothed = np.fft.ifftn(np.fft.fftn(rho.values) * np.exp(-0.5 * delta**2 * k2)).real
    return DensityGrid(smoothed)


def solve_poisson(rho: DensityGrid | np.ndarray) -> FieldSample:
    """Solve Laplace(U) = 1 - rho on the unit torus spectrally.

    The zero mode of U is set to 0 and the Nyquist mode of the gradient is
    dropped so that E stays real.
    """
    values = rho.values if isinstance(rho, DensityGrid) else np.asarray(rho, dtype=float)
    n, d = values.shape[0], values.ndim
    mass = float(tree_sum(values.ravel())) / n**d
    if abs(mass - 1.0) > POISSON_MASS_TOL:
        raise ValueError(f"density has mass {mass!r}; the periodic problem needs mass 1")
    ks = _wavenumbers(n, d)
    k2 = sum(k * k for k in ks)
    src = np.fft.fftn(1.0 - values)
    k2_safe = np.where(k2 == 0, 1.0, k2)
    u_hat = np.where(k2 == 0, 0.0, -src / k2_safe)
    potential = np.fft.ifftn(u_hat).real
    e = []
    for k in ks:
        kk = k.copy()
        if n % 2 == 0:
            kk[np.isclose(np.abs(kk), np.pi * n)] = 0.0
        e.append(np.fft.ifftn(-1j * kk * u_hat).real)
    return FieldSample(potential, np.stack(e, axis=-1))


def spectral_laplacian(u: np.ndarray) -> np.ndarray:
    ks = _wavenumbers(u.shape[0], u.ndim)
    k2 = sum(k * k for k in ks)
    return np.fft.ifftn(-k2 * np.fft.fftn(u)).real


class EfieldBoundReport(tuple):
    """(measured sup |E|, reference 1 + ||rho||_p)."""

    __slots__ = ()

    def __new__(cls, measured, reference):
        return super().__new__(cls, (measured, reference))

    measured = property(lambda self: self[0])
    reference = property(lambda self: self[1])

    @property
    def ratio(self) -> float:
        return self.measured / self.reference


def efield_bound_report(rho: DensityGrid, p: float) -> EfieldBoundReport:
    """Measured ||E||_inf and the reference 1 + ||rho||_{L^p}; needs p > d.

    The unknown constant C in ||E||_inf <= C (1 + ||rho||_p) is what callers
    estimate from the ratio across density families.
    """
    if p <= rho.dimension:
        raise ValueError(f"need p > d = {rho.dimension}, got {p}")
    fs = solve_poisson(rho)
    return EfieldBoundReport(fs.sup_norm(), 1.0 + lp_norm(rho, p))


def save_density(g: DensityGrid, path) -> None:
    _save_grid(path, g.n, g.dimension, {"rho": g.values})


def save_field(fs: FieldSample, path) -> None:
    cols = {"U": fs.potential}
    for k in range(fs.dimension):
        cols[f"E{k + 1}"] = fs.efield[..., k]
    _save_grid(path, fs.n, fs.dimension, cols)


def _save_grid(path, n, d, cols: dict) -> None:
    idx = np.indices((n,) * d).reshape(d, -1).T
    data = np.column_stack([c.ravel() for c in cols.values()])
    with open(path, "w", newline="") as fh:
        fh.write(f"# n={n} d={d}\n")
        wr = csv.writer(fh)
        wr.writerow([f"i{k + 1}" for k in range(d)] + list(cols))
        for ii, row in zip(idx, data):
            wr.writerow([str(i) for i in ii] + [f"{val:.17g}" for val in row])


def load_grid(path) -> dict:
    """Read a grid CSV back into ``{column: (n,)*d array}``."""
    with open(path, newline="") as fh:
        meta = fh.readline().lstrip("#").split()
        info = dict(item.split("=") for item in meta)
        n, d = int(info["n"]), int(info["d"])
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    return {name: body[:, j].reshape((n,) * d) for j, name in enumerate(header) if j >= d}


# --- smooth kernels ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SmoothKernel:
    """Periodic interaction potential K with gradient and Hessian bound H.

    ``potential`` and ``gradient`` act on displacement arrays of shape
    ``(..., d)``. ``hessian_bound`` is the analytic sup of the operator norm
    of D^2 K when known, otherwise ``None``.
    """

    name: str
    potential: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian_bound: float | None = None
    params: dict = field(default_factory=dict)
    # optional O(N) force for kernels that are short trigonometric sums
    mode_force: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        h = self.hessian_bound
        if h is not None and not (np.isfinite(h) and h >= 0):
            raise ValueError("hessian bound must be finite and nonnegative")


@dataclass(frozen=True)
class PoissonCoupling:
    n: int
    delta: float = 0.0

    def __post_init__(self):
        if self.n < 4:
            raise ValueError("Poisson grid needs n >= 4")
        if self.delta < 0:
            raise ValueError("mollification radius must be nonnegative")


def zero_kernel() -> SmoothKernel:
    return SmoothKernel(
        "zero", lambda z: np.zeros(z.shape[:-1]), lambda z: np.zeros_like(z), 0.0
    )


def cosine_kernel(amplitude: float = 1.0) -> SmoothKernel:
    """K(x) = a cos(2 pi x1) / (4 pi^2); H = |a|."""
    a = float(amplitude)

    def pot(z):
        return a * np.cos(TWO_PI * z[..., 0]) / TWO_PI**2

    def grad(z):
        g = np.zeros_like(z)
        g[..., 0] = -a * np.sin(TWO_PI * z[..., 0]) / TWO_PI
        return g

    def modes(x, w):
        s1, c1 = np.sin(TWO_PI * x[:, 0]), np.cos(TWO_PI * x[:, 0])
        S, C = tree_sum(w * s1), tree_sum(w * c1)
        f = np.zeros_like(x)
        f[:, 0] = -a * (s1 * C - c1 * S) / TWO_PI
        return f

    return SmoothKernel("cosine", pot, grad, abs(a), {"amplitude": a}, modes)


def cos_product_kernel(amplitude: float = 1.0) -> SmoothKernel:
    """K(x) = a cos(2 pi x1) cos(2 pi x2) / (4 pi^2); H = |a|.

    The Hessian is a [[-c1 c2, s1 s2], [s1 s2, -c1 c2]] with eigenvalues
    -a cos(2 pi (x1 -+ x2)), hence the bound.
    """
    a = float(amplitude)

    def pot(z):
        return a * np.cos(TWO_PI * z[..., 0]) * np.cos(TWO_PI * z[..., 1]) / TWO_PI**2

    def grad(z):
        s1, c1 = np.sin(TWO_PI * z[..., 0]), np.cos(TWO_PI * z[..., 0])
        s2, c2 = np.sin(TWO_PI * z[..., 1]), np.cos(TWO_PI * z[..., 1])
        g = np.zeros_like(z)
        g[..., 0] = -a * s1 * c2 / TWO_PI
        g[..., 1] = -a * c1 * s2 / TWO_PI
        return g

    def modes(x, w):
        # expand sin(A - B) cos(C - D) and friends into weighted sums over j
        s1, c1 = np.sin(TWO_PI * x[:, 0]), np.cos(TWO_PI * x[:, 0])
        s2, c2 = np.sin(TWO_PI * x[:, 1]), np.cos(TWO_PI * x[:, 1])
        cc, cs = tree_sum(w * c1 * c2), tree_sum(w * c1 * s2)
        sc, ss = tree_sum(w * s1 * c2), tree_sum(w * s1 * s2)
        f = np.zeros_like(x)
        f[:, 0] = -a * (s1 * c2 * cc + s1 * s2 * cs - c1 * c2 * sc - c1 * s2 * ss) / TWO_PI
        f[:, 1] = -a * (c1 * s2 * cc - c1 * c2 * cs + s1 * s2 * sc - s1 * c2 * ss) / TWO_PI
        return f

    return SmoothKernel("cos_product", pot, grad, abs(a), {"amplitude": a}, modes)


KERNELS = {"zero": zero_kernel, "cosine": cosine_kernel, "cos_product": cos_product_kernel}


def make_kernel(name: str, **params) -> SmoothKernel:
    try:
        factory = KERNELS[name]
    except KeyError:
        raise ConfigError(f"unknown kernel {name!r}; known: {sorted(KERNELS)}") from None
    return factory(**params)


def pairwise_force(x: np.ndarray, w: np.ndarray, kernel: SmoothKernel, workers: int = 1) -> np.ndarray:
    """force_i = sum_j w_j gradK(x_i - x_j) with a fixed per-target reduction tree.

    Targets are split into contiguous blocks; each block's sums are independent
    of the split, so the output does not depend on ``workers``.
    """
    n = x.shape[0]

    def block(lo, hi):
        disp = minimal_image(x[lo:hi, None, :] - x[None, :, :])
        g = kernel.gradient(disp) * w[None, :, None]
        return tree_sum(g, axis=1)

    if workers <= 1 or n < 2 * workers:
        return block(0, n)
    edges = np.linspace(0, n, workers + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(block, edges[:-1], edges[1:]))
    return np.concatenate(parts, axis=0)


def kernel_force(ens: PhaseEnsemble, model: SmoothKernel, workers: int = 1) -> np.ndarray:
    """Mean-field force grad(K * rho) at every particle, self-term included."""
    return mean_field_force(ens.x, ens.w, model, workers)


def mean_field_force(x: np.ndarray, w: np.ndarray, kernel: SmoothKernel, workers: int = 1) -> np.ndarray:
    """Mode-sum force when the kernel provides one, else the direct pairwise sum.

    The mode sum is serial and O(N), so it is worker-independent as well.
    """
    if kernel.mode_force is not None:
        return kernel.mode_force(x, w)
    return pairwise_force(x, w, kernel, workers)


def kernel_hessian_bound(model: SmoothKernel, n: int = 32, d: int = 2, h: float = 1e-4) -> float:
    """sup of the Hessian operator norm of K.

    Built-in kernels return their analytic value; otherwise the Hessian is
    estimated by central differences of the gradient on an ``n^d`` probe grid,
    which can only underestimate the true sup up to O(h^2).
    """
    if model.hessian_bound is not None:
        return float(model.hessian_bound)
    axes = [np.arange(n) / n] * d
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    hess = np.empty(pts.shape[:1] + (d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        hess[:, :, k] = (model.gradient(pts + e) - model.gradient(pts - e)) / (2 * h)
    hess = 0.5 * (hess + np.swapaxes(hess, 1, 2))
    return float(np.abs(np.linalg.eigvalsh(hess)).max())


# --- magnetic fields -----------------------------------------------------------


@dataclass(frozen=True)
class ConstantUniform:
    """B = (0, 0, omega) with omega >= 0."""

    omega: float

    def __post_init__(self):
        if self.omega < 0:
            raise ValueError("omega must be nonnegative")


@dataclass(frozen=True, eq=False)
class AnalyticNonUniform:
    """External field given by a closure.

    For ``d=2`` the closure returns the scalar b(t, x) of B = (0, 0, b); for
    ``d=3`` it returns the full 3-vector. Positions arrive as ``(N, d)``.
    ``holder`` maps alpha to a declared Hölder seminorm.
    """

    func: Callable
    d: int
    sup_norm: float | None = None
    holder: dict = field(default_factory=dict)
    name: str = "custom"


MagneticFieldModel = ConstantUniform | AnalyticNonUniform


def eval_B(model: MagneticFieldModel, t: float, x) -> np.ndarray:
    """Magnetic field at time ``t``; returns shape ``(3,)`` for one point or ``(N, 3)``."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if isinstance(model, ConstantUniform):
        out = np.zeros((pts.shape[0], 3))
        out[:, 2] = model.omega
    else:
        val = np.asarray(model.func(t, pts), dtype=float)
        if model.d == 2:
            out = np.zeros((pts.shape[0], 3))
            out[:, 2] = np.broadcast_to(val, (pts.shape[0],))
        else:
            out = np.broadcast_to(val, (pts.shape[0], 3)).astype(float)
        if not np.all(np.isfinite(out)):
            raise ValueError("magnetic field evaluated to a non-finite value")
    return out[0] if single else out


def sine_field(amplitude: float = 1.0, d: int = 2) -> AnalyticNonUniform:
    """b(x) = a sin(2 pi x1) (along e3) with analytic sup and Hölder seminorms.

    On the torus the seminorm is max over 0 < h <= 1/2 of 2|a| sin(pi h) / h^alpha,
    a one-dimensional maximisation done to optimizer precision.
    """
    a = float(amplitude)
    if d == 2:
        func = lambda t, x: a * np.sin(TWO_PI * x[:, 0])
    else:
        def func(t, x):
            out = np.zeros((x.shape[0], 3))
            out[:, 2] = a * np.sin(TWO_PI * x[:, 0])
            return out
    return AnalyticNonUniform(func, d, abs(a), _SineHolder(abs(a)), name="sine")


class _SineHolder(dict):
    """Lazily computed analytic Hölder seminorms of a sin(2 pi x1)."""

    def __init__(self, amp):
        super().__init__()
        self.amp = amp

    def __missing__(self, alpha):
        if self.amp == 0:
            return 0.0
        res = minimize_scalar(
            lambda h: -2 * np.sin(np.pi * h) / h**alpha, bounds=(1e-9, 0.5), method="bounded",
            options={"xatol": 1e-12},
        )
        val = self.amp * float(-res.fun)
        self[alpha] = val
        return val

    def __contains__(self, alpha):
        return True


def make_magnetic(kind: str, d: int = 2, **params) -> MagneticFieldModel:
    if kind == "constant":
        return ConstantUniform(float(params.get("omega", 0.0)))
    if kind == "sine":
        return sine_field(float(params.get("amplitude", 1.0)), d)
    raise ConfigError(f"unknown magnetic field kind {kind!r}; known: ['constant', 'sine']")


def b_norms(model: MagneticFieldModel, T: float, alpha: float, n: int = 16, nt: int = 8, d: int | None = None):
    """(sup |B|, Hölder seminorm of order alpha) over [0, T] x T^d.

    Declared analytic values take precedence. Otherwise both are probed on an
    ``n^d`` spatial grid at ``nt + 1`` times; probes are lower estimates.
    """
    if not 0 < alpha < 1:
        raise ValueError("Hölder exponent must lie in (0, 1)")
    if isinstance(model, ConstantUniform):
        return float(model.omega), 0.0
    d = model.d if d is None else d
    sup_dec = model.sup_norm
    hol_dec = model.holder[alpha] if alpha in model.holder else None
    if sup_dec is not None and hol_dec is not None:
        return float(sup_dec), float(hol_dec)
    axes = [np.arange(n) / n] * d
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    dist = np.linalg.norm(torus_displacement(pts[:, None, :], pts[None, :, :]), axis=-1)
    off = dist > 0
    sup, hol = 0.0, 0.0
    for t in np.linspace(0.0, T, nt + 1):
        b = eval_B(model, t, pts)
        sup = max(sup, float(np.linalg.norm(b, axis=1).max()))
        diff = np.linalg.norm(b[:, None, :] - b[None, :, :], axis=-1)
        hol = max(hol, float((diff[off] / dist[off] ** alpha).max()))
    return (float(sup_dec) if sup_dec is not None else sup,
            float(hol_dec) if hol_dec is not None else hol)
