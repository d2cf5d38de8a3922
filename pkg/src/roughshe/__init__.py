"""Numerical laboratory for the stochastic heat equation with critically rough noise.

The spatial correlation ``f`` is built from a subordinator whose Levy
density is ``log(1/r)**alpha * r**-1.5`` on ``(0, 1/e)``.  Modules:

``levy_kernel``      Laplace exponent, potential measure, ``f`` and its transform
``gaussian_field``   the linearised field ``Z`` on a periodic lattice
``spde_solver``      exponential-Euler integration of the mild equation
``moments``          log-domain moments, Feynman-Kac, oscillation statistics
``cli``              configuration, reports and the acceptance suite
"""

__version__ = "0.1.0"

from .levy_kernel import AlphaParam, CorrelationModel, KernelSettings, LaplaceExponent  # noqa: E402
from .gaussian_field import LatticeSpec, ZField, sample_field  # noqa: E402
from .spde_solver import SigmaSpec, SolverConfig, run  # noqa: E402
from .moments import MomentEstimate, estimate_moment, feynman_kac_moment  # noqa: E402

__all__ = [
    "AlphaParam", "CorrelationModel", "KernelSettings", "LaplaceExponent", "LatticeSpec",
    "ZField", "sample_field", "SigmaSpec", "SolverConfig", "run", "MomentEstimate",
    "estimate_moment", "feynman_kac_moment", "__version__",
]
