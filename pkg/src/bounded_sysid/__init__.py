"""Identification of linear systems x_{t+1} = A x_t + w_t under bounded noise.

Least squares, set-membership (SME) estimators, closed-form sample
complexity bounds with Monte-Carlo checks, and a convergence benchmark.
"""

from .errors import (BoundedSysIdError, DimensionMismatch, FeasibilityError, Infeasible,
                     InvalidParam, NotConverged, NumericalError, SingularGram, Unbounded,
                     UnboundedSet, UnstableSystem)
from .estimators import (EstimateReport, Method, SmePolytope, cls_estimate, estimation_error,
                         ols_estimate, ols_sme_estimate, sme_contains, sme_diameter, sme_polytope)
from .system import (NoiseModel, SystemMatrix, Trajectory, make_noise_model, make_rng,
                     random_system, read_trajectory_csv, simulate, write_trajectory_csv)

__version__ = "0.1.0"
