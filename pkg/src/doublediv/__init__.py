"""Dirichlet problems for double divergence form equations

    div^2(rho A) - div(rho b) = div^2 G - div h

with measure-valued boundary data, on intervals and disks.
"""
from .errors import (ConfigError, DomainError, DoubleDivError, EllipticityError, EvaluationError,
                     GeometryError, ResolutionError, ResourceError, SolverError, TraceError,
                     UnsupportedError)
from .geometry import Domain, Mesh, boundary_grid, make_domain, make_mesh
from .fields import CoefficientSet, certify_h1_h2, certify_h3, manufacture, scalar_field
from .measures import BoundaryMeasure, bl_distance, kappa, mollify_measure
from .mollify import ExactLevel, Mollifier, admissible_sequence
from .solver import DirichletProblem, SolutionField, solve_measure, solve_smooth
from .oracle1d import exact_solve_1d
from .weakform import dirichlet_residual, interior_residual, test_bank
from .trace import proof_constant, radius_sweep, trace_limit
from .analysis import apriori_check, harnack_check, modulus_check

__version__ = "0.1.0"
