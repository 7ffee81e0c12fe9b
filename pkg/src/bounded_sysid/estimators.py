"""OLS, the set-membership polytope and the two SME-constrained estimators.

The polytope couples rows of ``A`` only through shared constraint normals:
row ``i`` must satisfy ``|x_k(i) - a_i . x_{k-1}| <= w_bar`` for every k.
Projections in Frobenius norm, least-squares fits and linear functionals all
split into independent per-row problems over these row polyhedra.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (DimensionMismatch, Infeasible, InvalidParam, SingularGram, SingularMatrix, Unbounded,
                     UnboundedSet)
from .numerics import Polyhedron, SupportOracle, operator_norm, project_polytope, qp_solve, solve_linear
from .numerics.polyhedron import NORMAL_EPS
from .numerics.qp import DEFAULT_TOL
from .system import Trajectory, make_rng

MEMBERSHIP_TOL = 1e-6


class Method(str, Enum):
    OLS = "ols"
    OLS_SME = "ols-sme"
    CLS = "cls"
    SME_DIAMETER = "sme-diameter"

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for m in cls:
            if m.value == key:
                return m
        raise InvalidParam(f"unknown method {value!r}; choose from {[m.value for m in cls]}")


class ErrorNorm(str, Enum):
    SPECTRAL = "spectral"
    FROBENIUS = "frobenius"

    @classmethod
    def parse(cls, value) -> "ErrorNorm":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise InvalidParam(f"unknown norm {value!r}; use 'spectral' or 'frobenius'") from None


@dataclass(frozen=True)
class SmePolytope:
    """All ``A`` with ``||x_k - A x_{k-1}||_inf <= w_bar`` for the stored pairs.

    ``X`` holds the regressors ``x_{k-1}`` as rows and ``Y`` the targets
    ``x_k``. Pairs with a (numerically) zero regressor carry no information
    about ``A`` and are dropped on construction.
    """

    w_bar: float
    X: np.ndarray
    Y: np.ndarray

    @classmethod
    def from_pairs(cls, X, Y, w_bar: float) -> "SmePolytope":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if X.shape != Y.shape:
            raise DimensionMismatch(f"regressors {X.shape} and targets {Y.shape} differ")
        if not w_bar > 0:
            raise InvalidParam(f"w_bar must be positive, got {w_bar}")
        keep = np.linalg.norm(X, axis=1) >= NORMAL_EPS
        return cls(float(w_bar), X[keep], Y[keep])

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def num_pairs(self) -> int:
        return self.X.shape[0]

    def row(self, i: int) -> Polyhedron:
        y = self.Y[:, i]
        G = np.vstack([self.X, -self.X])
        h = np.concatenate([self.w_bar + y, self.w_bar - y])
        return Polyhedron(G, h)

    def max_violation(self, A) -> float:
        A = np.asarray(A, dtype=float)
        if A.shape != (self.n, self.n):
            raise DimensionMismatch(f"A has shape {A.shape}, polytope is for {self.n}x{self.n}")
        if self.num_pairs == 0:
            return -np.inf
        return float(np.max(np.abs(self.Y - self.X @ A.T)) - self.w_bar)


def sme_polytope(traj: Trajectory, w_bar: float) -> SmePolytope:
    X = traj.states
    return SmePolytope.from_pairs(X[:-1], X[1:], w_bar)


def sme_contains(P: SmePolytope, A, tol: float = 1e-9) -> bool:
    return P.max_violation(A) <= tol


@dataclass
class EstimateReport:
    method: Method
    A_hat: np.ndarray
    residual_sse: float
    in_sme_set: bool
    diagnostics: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "n": int(self.A_hat.shape[0]),
            "A_hat": self.A_hat.tolist(),
            "residual_sse": self.residual_sse,
            "in_sme_set": self.in_sme_set,
            "diagnostics": self.diagnostics,
        }


def _informative(traj: Trajectory):
    # pairs whose regressor is exactly zero (always the first one, x_0 = 0) add a
    # constant independent of A; they are skipped, matching the SME preprocessing
    X = traj.states
    keep = np.any(X[:-1] != 0.0, axis=1)
    return X[:-1][keep], X[1:][keep]


def _row_sse(X, Y, i, a) -> float:
    r = Y[:, i] - X @ a
    return float(r @ r)


def _sse(traj: Trajectory, A) -> float:
    # summed row by row in a fixed order: rounding is monotone, so row-wise
    # comparisons between estimates carry over to the totals
    X, Y = _informative(traj)
    A = np.asarray(A)
    total = 0.0
    for i in range(A.shape[0]):
        total += _row_sse(X, Y, i, A[i])
    return total


def _normal_equations(traj: Trajectory):
    X = traj.states[:-1]
    Y = traj.states[1:]
    return X.T @ X, X.T @ Y


def ols_estimate(traj: Trajectory, w_bar: float | None = None) -> EstimateReport:
    """Least squares ``A = (sum x_{t+1} x_t')(sum x_t x_t')^{-1}``.

    ``in_sme_set`` is only evaluated when ``w_bar`` is given.
    """
    gram, cross = _normal_equations(traj)
    try:
        A_hat = solve_linear(gram, cross).T
    except SingularMatrix as exc:
        raise SingularGram(f"Gram matrix of {traj.T} samples is singular: {exc}") from None
    inside = False
    if w_bar is not None:
        inside = sme_contains(sme_polytope(traj, w_bar), A_hat, MEMBERSHIP_TOL)
    return EstimateReport(Method.OLS, A_hat, _sse(traj, A_hat), inside)


def _row_diag(i, sol=None):
    if sol is None:
        return {"row": i, "solved": False, "kkt_residual": 0.0, "iterations": 0, "converged": True}
    return {"row": i, "solved": True, "kkt_residual": sol.kkt_residual,
            "iterations": sol.iterations, "converged": sol.converged}


def ols_sme_estimate(traj: Trajectory, w_bar: float, *, ols: EstimateReport | None = None,
                     polytope: SmePolytope | None = None, tol: float = DEFAULT_TOL) -> EstimateReport:
    """OLS estimate projected (Frobenius norm) onto the SME polytope.

    Rows of the OLS estimate that already satisfy their constraints are kept
    bit for bit; the others are projected independently.
    """
    ols = ols or ols_estimate(traj)
    P = polytope or sme_polytope(traj, w_bar)
    A_hat = ols.A_hat.copy()
    diags = []
    for i in range(P.n):
        Pi = P.row(i)
        if Pi.contains(A_hat[i], tol):
            diags.append(_row_diag(i))
            continue
        try:
            sol = project_polytope(ols.A_hat[i], Pi, tol=tol)
        except Infeasible as exc:
            raise Infeasible(f"row {i}: SME constraints admit no solution ({exc})") from None
        A_hat[i] = sol.point
        diags.append(_row_diag(i, sol))
    inside = sme_contains(P, A_hat, MEMBERSHIP_TOL)
    return EstimateReport(Method.OLS_SME, A_hat, _sse(traj, A_hat), inside, diags)


def cls_estimate(traj: Trajectory, w_bar: float, *, ols: EstimateReport | None = None,
                 polytope: SmePolytope | None = None, blend: EstimateReport | None = None,
                 tol: float = DEFAULT_TOL) -> EstimateReport:
    """Least squares restricted to the SME polytope, one QP per row.

    The projected OLS point (``blend``, computed when not given) is feasible
    too; a row keeps it whenever the QP answer is not strictly better, which
    settles floating-point ties where both land on the same point.
    """
    gram, cross = _normal_equations(traj)
    if ols is None:
        try:
            ols = ols_estimate(traj)
        except SingularGram:
            ols = None
    P = polytope or sme_polytope(traj, w_bar)
    if blend is None and ols is not None:
        blend = ols_sme_estimate(traj, w_bar, ols=ols, polytope=P, tol=tol)
    X, Y = _informative(traj)
    n = P.n
    A_hat = np.empty((n, n))
    diags = []
    for i in range(n):
        Pi = P.row(i)
        if ols is not None and Pi.contains(ols.A_hat[i], tol):
            A_hat[i] = ols.A_hat[i]
            diags.append(_row_diag(i))
            continue
        try:
            sol = qp_solve(2.0 * gram, 2.0 * cross[:, i], Pi, tol=tol)
        except SingularMatrix as exc:
            raise SingularGram(f"row {i}: Gram matrix is singular: {exc}") from None
        except Infeasible as exc:
            raise Infeasible(f"row {i}: SME constraints admit no solution ({exc})") from None
        A_hat[i] = sol.point
        if blend is not None and _row_sse(X, Y, i, blend.A_hat[i]) <= _row_sse(X, Y, i, sol.point):
            A_hat[i] = blend.A_hat[i]
        diags.append(_row_diag(i, sol))
    inside = sme_contains(P, A_hat, MEMBERSHIP_TOL)
    return EstimateReport(Method.CLS, A_hat, _sse(traj, A_hat), inside, diags)


def diameter_directions(n: int, extra_directions: int, rng=None) -> np.ndarray:
    """The n^2 coordinate matrices followed by ``extra_directions`` random
    unit-Frobenius matrices; shape ``(n*n + extra, n, n)``."""
    if rng is None:
        rng = make_rng(0, "diameter-directions")
    axes = np.eye(n * n).reshape(n * n, n, n)
    rand = rng.standard_normal((extra_directions, n, n))
    if extra_directions:
        rand /= np.linalg.norm(rand.reshape(extra_directions, -1), axis=1)[:, None, None]
    return np.concatenate([axes, rand])


def directional_widths(P: SmePolytope, directions) -> np.ndarray:
    """Width ``sup <D,A> - inf <D,A>`` of the polytope along each direction."""
    n = P.n
    if P.num_pairs == 0:
        raise UnboundedSet("SME polytope has no informative constraints")
    oracles = [SupportOracle(P.row(i)) for i in range(n)]
    cache = {}

    def support(i, v):
        key = (i, v.tobytes())
        if key not in cache:
            try:
                cache[key] = oracles[i].maximize(v)[1]
            except Unbounded:
                raise UnboundedSet(f"SME polytope is unbounded along row {i}") from None
        return cache[key]

    out = np.empty(len(directions))
    for k, D in enumerate(directions):
        w = 0.0
        for i in range(n):
            d = D[i]
            if not np.any(d):
                continue
            w += support(i, d) + support(i, -d)
        out[k] = w
    return out


def sme_diameter(P: SmePolytope, extra_directions: int = 200, rng=None) -> float:
    """Lower estimate of the Frobenius diameter: the largest directional width
    over the coordinate axes and ``extra_directions`` random directions.
    Exact for scalar systems."""
    dirs = diameter_directions(P.n, extra_directions, rng)
    return float(np.max(directional_widths(P, dirs)))


def estimation_error(A_hat, A_true, norm="spectral") -> float:
    A_hat = np.atleast_2d(np.asarray(A_hat, dtype=float))
    A_true = np.atleast_2d(np.asarray(A_true, dtype=float))
    if A_hat.shape != A_true.shape:
        raise DimensionMismatch(f"shapes {A_hat.shape} and {A_true.shape} differ")
    D = A_hat - A_true
    if ErrorNorm.parse(norm) is ErrorNorm.SPECTRAL:
        return float(operator_norm(D))
    return float(np.sqrt(np.sum(D * D)))
