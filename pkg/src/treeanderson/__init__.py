"""Anderson model on regular trees: fixed points of the self-consistent equation.

Submodules
----------
halfplane
    Hyperbolic distance, Moebius maps and the free Green's function.
disorder
    Potential laws, samplers and hypothesis validators.
population
    Population-dynamics solver and the exact finite-tree oracle.
density
    Cauchy-projected density iteration and the sub-Cauchy tail certificate.
spectra
    Lyapunov exponents, the delocalization criterion and concentration probes.
inequalities
    Slack functions for the inequalities of the hyperbolic distance.
cli
    Batch command-line front end.
"""
__version__ = "0.1.0"

from .halfplane import EnergyPoint, HalfPlanePoint, MoebiusMap, free_green, hyp_dist  # noqa: E402
from .disorder import ConfigurationError, DisorderLaw, validate  # noqa: E402
from .population import IterationConfig, MeasurePool, finite_tree_green, run_to_fixed_point, step_pool  # noqa: E402
from .density import GridDensity, GridSpec, TailBound, tail_certify  # noqa: E402
from .spectra import SpectralReport, lyapunov_estimate, spectral_report  # noqa: E402

__all__ = [
    "__version__",
    "EnergyPoint",
    "HalfPlanePoint",
    "MoebiusMap",
    "free_green",
    "hyp_dist",
    "ConfigurationError",
    "DisorderLaw",
    "validate",
    "IterationConfig",
    "MeasurePool",
    "finite_tree_green",
    "run_to_fixed_point",
    "step_pool",
    "GridDensity",
    "GridSpec",
    "TailBound",
    "tail_certify",
    "SpectralReport",
    "lyapunov_estimate",
    "spectral_report",
]
