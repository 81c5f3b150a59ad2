"""Experiment configuration: flat ``key = value`` text with sections.

Example::

    [run]
    dimension = 2
    particles = 256
    dt = 1e-3
    T = 2
    stride = 50
    seed = 0

    [interaction]
    kind = kernel          ; or poisson
    kernel = cos_product
    amplitude = 1.0
    summation = modes      ; or direct (pairwise, threaded)

    [magnetic]
    kind = constant        ; or sine
    omega = 2

    [initial]
    family = maxwellian
    sigma = 1.0
    shift_v = 0.01 0

    [bounds]
    evaluate = dobrushin theorem2 renormalized
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..bounds import DEFAULT_C0
from ..ensemble import FAMILIES, ConfigError
from ..fields import KERNELS

KNOWN_BOUNDS = {"dobrushin", "theorem2", "renormalized", "statement1", "statement2", "velocity"}
KERNEL_BOUNDS = {"dobrushin", "theorem2", "renormalized"}
POISSON_BOUNDS = {"statement1", "statement2", "velocity"}


@dataclass
class ExperimentConfig:
    dimension: int = 2
    particles: int = 256
    dt: float = 1e-3
    T: float = 2.0
    stride: int = 50
    seed: int = 0
    workers: int = 1

    interaction: str = "kernel"
    kernel: str = "cos_product"
    kernel_params: dict = field(default_factory=lambda: {"amplitude": 1.0})
    summation: str = "modes"
    poisson_grid: int = 32
    mollify: float = 0.0

    magnetic: str = "constant"
    magnetic_params: dict = field(default_factory=lambda: {"omega": 2.0})

    family: str = "maxwellian"
    family_params: dict = field(default_factory=lambda: {"sigma": 1.0})
    shift_x: tuple = ()
    shift_v: tuple = ()
    independent: bool = False

    method: str = "exact"
    epsilon: float = 1e-2
    bounds: tuple = ("dobrushin", "theorem2", "renormalized")
    tolerance: float = 0.01
    c_d: float = 1.0
    C_d: float = 1.0
    c0: float = DEFAULT_C0
    alpha: float = 0.5

    output: str = "out"
    figures: bool = True
    source_text: str = ""

    def __post_init__(self):
        self.validate()

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(canonical_text(self).encode()).hexdigest()[:16]

    def shift_vectors(self):
        d = self.dimension
        sx = np.zeros(d) if not self.shift_x else np.asarray(self.shift_x, dtype=float)
        sv = np.zeros(d) if not self.shift_v else np.asarray(self.shift_v, dtype=float)
        if sx.shape != (d,) or sv.shape != (d,):
            raise ConfigError(f"shift vectors must have {d} components")
        return sx, sv

    def validate(self) -> None:
        if self.dimension not in (2, 3):
            raise ConfigError("dimension must be 2 or 3")
        if self.dt <= 0 or self.T < self.dt:
            raise ConfigError("need dt > 0 and T >= dt")
        if self.particles < 2:
            raise ConfigError("need at least 2 particles")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if self.interaction not in ("kernel", "poisson"):
            raise ConfigError(f"unknown interaction {self.interaction!r}")
        if self.interaction == "kernel" and self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if self.summation not in ("modes", "direct"):
            raise ConfigError("summation must be 'modes' or 'direct'")
        if self.interaction == "poisson" and self.poisson_grid < 4:
            raise ConfigError("poisson grid must be >= 4")
        if self.magnetic not in ("constant", "sine"):
            raise ConfigError(f"unknown magnetic field kind {self.magnetic!r}")
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown initial family {self.family!r}")
        if self.method not in ("exact", "entropic"):
            raise ConfigError("distance method must be 'exact' or 'entropic'")
        unknown = set(self.bounds) - KNOWN_BOUNDS
        if unknown:
            raise ConfigError(f"unknown bounds {sorted(unknown)}")
        kernel_only = set(self.bounds) & KERNEL_BOUNDS
        if kernel_only and (self.interaction != "kernel" or self.magnetic != "constant"):
            raise ConfigError(f"{sorted(kernel_only)} need a smooth kernel and a constant field")
        poisson_only = set(self.bounds) & POISSON_BOUNDS
        if poisson_only and self.interaction != "poisson":
            raise ConfigError(f"{sorted(poisson_only)} need the Poisson interaction")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        self.shift_vectors()


def _floats(text: str) -> tuple:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _params(section, skip) -> dict:
    return {k: float(v) for k, v in section.items() if k not in skip}


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    kw = {}
    try:
        if cp.has_section("run"):
            r = cp["run"]
            for key, conv in (("dimension", int), ("particles", int), ("dt", float), ("T", float),
                              ("stride", int), ("seed", int), ("workers", int)):
                if key in r:
                    kw[key] = conv(r[key])
        if cp.has_section("interaction"):
            s = cp["interaction"]
            kw["interaction"] = s.get("kind", "kernel")
            if kw["interaction"] == "kernel":
                kw["kernel"] = s.get("kernel", "cos_product")
                kw["summation"] = s.get("summation", "modes")
                kw["kernel_params"] = _params(s, {"kind", "kernel", "summation"})
            else:
                kw["poisson_grid"] = int(s.get("grid", 32))
                kw["mollify"] = float(s.get("mollify", 0.0))
        if cp.has_section("magnetic"):
            s = cp["magnetic"]
            kw["magnetic"] = s.get("kind", "constant")
            kw["magnetic_params"] = _params(s, {"kind"})
        if cp.has_section("initial"):
            s = cp["initial"]
            kw["family"] = s.get("family", "maxwellian")
            kw["shift_x"] = _floats(s.get("shift_x", ""))
            kw["shift_v"] = _floats(s.get("shift_v", ""))
            kw["independent"] = s.getboolean("independent", False)
            kw["family_params"] = _params(s, {"family", "shift_x", "shift_v", "independent"})
        if cp.has_section("distance"):
            s = cp["distance"]
            kw["method"] = s.get("method", "exact")
            kw["epsilon"] = float(s.get("epsilon", 1e-2))
        if cp.has_section("bounds"):
            s = cp["bounds"]
            if "evaluate" in s:
                kw["bounds"] = tuple(s["evaluate"].replace(",", " ").split())
            for key in ("tolerance", "c_d", "C_d", "c0", "alpha"):
                if key in s:
                    kw[key] = float(s[key])
        if cp.has_section("output"):
            s = cp["output"]
            kw["output"] = s.get("directory", "out")
            kw["figures"] = s.getboolean("figures", True)
    except ValueError as exc:
        raise ConfigError(f"bad value in config: {exc}") from None
    return ExperimentConfig(**kw, source_text=text)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def canonical_text(cfg: ExperimentConfig) -> str:
    """Stable rendering of every setting; hashed into output provenance."""
    items = []
    for name in sorted(cfg.__dataclass_fields__):
        if name in ("source_text", "output", "figures", "workers", "summation"):
            continue
        val = getattr(cfg, name)
        if isinstance(val, dict):
            val = sorted(val.items())
        items.append(f"{name}={val!r}")
    return "\n".join(items)
