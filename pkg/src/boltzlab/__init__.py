"""boltzlab: a desk-scale laboratory for the kinetic equation near equilibrium.

Subpackages: velocity-space discretization and macro/micro projections,
collision-operator assembly, dyadic frequency analysis, per-mode linear
dynamics, the nonlinear stepper with hypocoercivity audits, and the
experiment harness with its CLI.
"""
from ._kernels import BACKEND as kernel_backend

__version__ = "0.1.0"
__all__ = ["kernel_backend", "__version__"]
