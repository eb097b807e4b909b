"""Desk-scale laboratory for singularly perturbed operators on S^1 and T^2.

Principal eigenpairs of ``eps*Lap + b.grad + c`` and their concentration on
the recurrent set of a Morse-Smale field ``b``, plus the first-order
transport equation ``<b, grad u> + c u = f`` as a vanishing-viscosity limit.
"""
from .errors import (ConvergenceError, ExpressionError, MsLabError, PreconditionError,
                     SweepError)
from .expr import Expr
from .mesh import PeriodicGrid, ScalarSamples, VectorSamples, build_grid, integrate, interpolate
from .fields import FieldSpec, make_field
from .kernels import BACKEND
from .dynsys import FixedPoint, PeriodicOrbit, RecurrentSet, classify, compute_b0
from .lyapunov import quadratic_local_lyapunov, verify_lyapunov
from .spectral import (EigenProblem, EigenResult, assemble, epsilon_sweep,
                       gradient_transform, principal_eigenpair)
from .concentration import concentration_report, simplex_check, weighted_measure
from .transport import (count_branches, hyperbolicity_constants, oscillation_indicator,
                        solve_linear, solve_nonlinear, viscous_solve)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConvergenceError", "EigenProblem", "EigenResult", "Expr", "ExpressionError",
    "FieldSpec", "FixedPoint", "MsLabError", "PeriodicGrid", "PeriodicOrbit",
    "PreconditionError", "RecurrentSet", "ScalarSamples", "SweepError", "VectorSamples",
    "assemble", "build_grid", "classify", "compute_b0", "concentration_report",
    "count_branches", "epsilon_sweep", "gradient_transform", "hyperbolicity_constants",
    "integrate", "interpolate", "make_field", "oscillation_indicator", "principal_eigenpair",
    "quadratic_local_lyapunov", "simplex_check", "solve_linear", "solve_nonlinear",
    "verify_lyapunov", "viscous_solve", "weighted_measure",
]
