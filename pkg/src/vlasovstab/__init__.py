"""Particle laboratory for Wasserstein stability of magnetized Vlasov dynamics on the torus."""

__version__ = "0.1.0"

from .ensemble import ConfigError, DensityGrid, PhaseEnsemble, deposit_density, sample_ensemble  # noqa: E402
from .fields import make_kernel, make_magnetic, solve_poisson  # noqa: E402
from .flow import Trajectory, free_flow  # noqa: E402
from .transport import PhaseMetricConfig, wasserstein_entropic, wasserstein_exact  # noqa: E402
from .bounds import BoundReport, dobrushin_bound, theorem2_bound  # noqa: E402

__all__ = [
    "__version__",
    "ConfigError",
    "DensityGrid",
    "PhaseEnsemble",
    "deposit_density",
    "sample_ensemble",
    "make_kernel",
    "make_magnetic",
    "solve_poisson",
    "Trajectory",
    "free_flow",
    "PhaseMetricConfig",
    "wasserstein_exact",
    "wasserstein_entropic",
    "BoundReport",
    "dobrushin_bound",
    "theorem2_bound",
]
