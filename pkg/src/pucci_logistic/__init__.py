"""Finite-difference solvers for F(x, D^2 u) + mu u = k(x) u^p on planar domains."""

__version__ = "0.1.0"

from .errors import (
    BlowupError,
    ConfigError,
    EigenError,
    GeometryError,
    LogisticError,
    OperatorError,
    PucciLogisticError,
    SolverError,
)
from .geometry import Difference, Disk, DomainMask, Grid2D, Offset, Rect, build_mask, distance_field
from .operators import DiscreteOperator, Kind, OperatorSpec, SymMat2, discretize, pucci_minus, pucci_plus
from .solver import DirichletProblem, SolveReport, Status, solve_dirichlet
from .eigen import EigenResult, eigen_monotonicity_check, principal_eigen
from .logistic import (
    BarrierSet,
    LogisticModel,
    MuClass,
    ReactionSpec,
    build_subsolution,
    build_supersolution_K1,
    build_supersolution_K2,
    classify_mu,
    monotone_solve,
    solve_annulus,
    solve_logistic,
)
from .blowup import BlowupResult, asymptotics_high, asymptotics_low, maximal_blowup, minimal_blowup
