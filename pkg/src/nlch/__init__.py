"""Nonlocal Cahn-Hilliard systems by minimizing movements.

Library layout:

* ``grid``         box discretizations and exterior quadrature
* ``kernels``      kernel families, assembly, admissibility checks
* ``potentials``   F = Gamma + Pi, Moreau envelopes, resolvents
* ``operators``    the invertible linear operator and the interaction form
* ``scheme``       implicit variational time stepping
* ``diagnostics``  energy estimates, Poincare constants, limit studies
* ``config``/``cli``  configuration files and the command line
"""

from .errors import ConfigurationError, NumericalError
from .grid import Grid, build_grid, pairwise_distance
from .kernels import KernelMatrix, KernelSpec, assemble, spectral_assemble_K4
from .operators import OperatorL, PhiSpec, make_operator
from .potentials import Potential, RegularizedPotential, make_potential
from .scheme import InnerSettings, SchemeConfig, Trajectory, run, step_minimize

__all__ = [
    "ConfigurationError",
    "NumericalError",
    "Grid",
    "build_grid",
    "pairwise_distance",
    "KernelMatrix",
    "KernelSpec",
    "assemble",
    "spectral_assemble_K4",
    "OperatorL",
    "PhiSpec",
    "make_operator",
    "Potential",
    "RegularizedPotential",
    "make_potential",
    "InnerSettings",
    "SchemeConfig",
    "Trajectory",
    "run",
    "step_minimize",
]

__version__ = "0.1.0"
