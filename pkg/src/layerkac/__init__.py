"""Layered lattice spin simulator with long-range in-layer coupling.

Subpackages split along the workflow: model definitions and exact energies
(`model`, `meanfield`), sampling (`mc`), block coarse-graining and defect
geometry (`coarse`), exact small-volume references (`oracle`), the continuum
free-energy functional (`functional`), and the analytic small-parameter
estimates (`bounds`).
"""

from .model import (
    KacKernel,
    Lattice,
    ModelParams,
    SpinConfig,
    ValidationError,
    build_kernel,
    conditional_gibbs,
    cosine_profile,
    hamiltonian,
    local_field,
)
from .meanfield import solve_mbeta

__version__ = "0.1.0"

__all__ = [
    "KacKernel", "Lattice", "ModelParams", "SpinConfig", "ValidationError",
    "build_kernel", "conditional_gibbs", "cosine_profile", "hamiltonian",
    "local_field", "solve_mbeta", "__version__",
]
