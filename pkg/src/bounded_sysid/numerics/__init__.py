"""Dense linear algebra, LP/QP kernels and regression helpers."""

from .linalg import operator_norm, solve_linear, spectral_radius
from .lp import SupportOracle, is_feasible, lp_solve
from .polyhedron import Polyhedron
from .qp import QpSolution, kkt_residual, project_polytope, qp_solve
from .regression import fit_loglog_slope

__all__ = [
    "Polyhedron", "QpSolution", "SupportOracle", "fit_loglog_slope", "is_feasible",
    "kkt_residual", "lp_solve", "operator_norm", "project_polytope", "qp_solve",
    "solve_linear", "spectral_radius",
]
