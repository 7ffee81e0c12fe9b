"""Dense simplex for ``max c.a  s.t.  G a <= h`` with free ``a``.

The problems met here have few variables and many constraints, so the
simplex runs on the dual ``min h.y  s.t.  G^T y = c, y >= 0``: the tableau
has only ``d`` rows. The primal optimum is recovered from the final basis by
solving ``G_B a = h_B``. Bland's rule (lowest index enters, lowest basic
index leaves on ties) guarantees termination.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..errors import Infeasible, InvalidParam, Unbounded
from .linalg import solve_linear
from .polyhedron import Polyhedron

PIVOT_TOL = 1e-10


@njit(cache=True)
def _pivot(T, b, r, j):
    piv = T[r, j]
    ncol = T.shape[1]
    for k in range(ncol):
        T[r, k] /= piv
    b[r] /= piv
    for i in range(T.shape[0]):
        if i == r:
            continue
        f = T[i, j]
        if f != 0.0:
            for k in range(ncol):
                T[i, k] -= f * T[r, k]
            b[i] -= f * b[r]


@njit(cache=True)
def _simplex(T, b, basis, cost, ncols, tol, max_pivots, scale):
    """Minimise ``cost . y`` over the tableau; only columns < ncols may enter.

    Returns (status, pivots) with status 0 = optimal, 1 = unbounded,
    2 = pivot cap reached.
    """
    nrow = T.shape[0]
    is_basic = np.zeros(T.shape[1], dtype=np.bool_)
    for i in range(nrow):
        is_basic[basis[i]] = True
    pivots = 0
    while pivots < max_pivots:
        # Bland: first column with negative reduced cost enters
        j = -1
        for k in range(ncols):
            if is_basic[k]:
                continue
            r = cost[k]
            for i in range(nrow):
                r -= cost[basis[i]] * T[i, k]
            if r < -tol * scale:
                j = k
                break
        if j < 0:
            return 0, pivots
        leave = -1
        best = 0.0
        for i in range(nrow):
            if T[i, j] > PIVOT_TOL:
                ratio = b[i] / T[i, j]
                if leave < 0 or ratio < best - tol * (1.0 + abs(best)):
                    leave = i
                    best = ratio
                elif ratio <= best + tol * (1.0 + abs(best)) and basis[i] < basis[leave]:
                    leave = i
                    if ratio < best:
                        best = ratio
        if leave < 0:
            return 1, pivots
        _pivot(T, b, leave, j)
        is_basic[basis[leave]] = False
        basis[leave] = j
        is_basic[j] = True
        pivots += 1
    return 2, pivots


def _solve_dual(G, h, c, tol=PIVOT_TOL, scale=None):
    """Run both phases on the dual.

    Returns (status, basis_constraint_indices, basic_dual_values).
    """
    m, d = G.shape
    A = G.T.copy()
    rhs = c.astype(float).copy()
    neg = rhs < 0
    A[neg] *= -1.0
    rhs[neg] *= -1.0
    T = np.hstack([A, np.eye(d)])
    b = rhs
    basis = np.arange(m, m + d)
    max_pivots = 50 * (m + d) + 1000

    cost1 = np.concatenate([np.zeros(m), np.ones(d)])
    status, _ = _simplex(T, b, basis, cost1, m + d, tol, max_pivots, 1.0 + d)
    if status == 2:
        raise RuntimeError(f"simplex phase 1 exceeded {max_pivots} pivots")
    art = basis >= m
    if b[art].sum() > tol * (1.0 + np.max(np.abs(c), initial=0.0)) * d:
        return "dual_infeasible", None, None

    # drive zero-level artificials out; rows that cannot pivot are redundant
    keep = []
    for i, k in enumerate(basis):
        if k < m:
            keep.append(i)
            continue
        cols = np.flatnonzero(np.abs(T[i, :m]) > PIVOT_TOL)
        cols = cols[~np.isin(cols, basis)]
        if cols.size:
            _pivot(T, b, i, int(cols[0]))
            basis[i] = int(cols[0])
            keep.append(i)
    T = np.ascontiguousarray(T[keep][:, :m])
    b = b[keep].copy()
    basis = basis[keep].copy()

    cost2 = np.asarray(h, dtype=float)
    if scale is None:
        scale = 1.0 + np.max(np.abs(cost2))
    status, _ = _simplex(T, b, basis, cost2, m, tol, max_pivots, scale)
    if status == 2:
        raise RuntimeError(f"simplex phase 2 exceeded {max_pivots} pivots")
    if status == 1:
        return "dual_unbounded", None, None
    return "optimal", basis, b


def _primal_from_basis(G, h, basis):
    GB = G[basis]
    if GB.shape[0] == G.shape[1]:
        return solve_linear(GB, h[basis])
    # rank-deficient normals: every solution of G_B a = h_B is optimal
    return np.linalg.lstsq(GB, h[basis], rcond=None)[0]


def is_feasible(P: Polyhedron) -> bool:
    """Exact emptiness test: feasible iff the dual with c = 0 is bounded."""
    status, _, _ = _solve_dual(P.G, P.h, np.zeros(P.dim))
    return status == "optimal"


def _lp_full(c, G, h):
    status, basis, _ = _solve_dual(G, h, c)
    if status == "dual_unbounded":
        raise Infeasible("LP constraints are infeasible")
    if status == "dual_infeasible":
        if is_feasible(Polyhedron(G, h)):
            raise Unbounded("LP objective is unbounded above on the feasible set")
        raise Infeasible("LP constraints are infeasible")
    return _primal_from_basis(G, h, basis)


def _top(values, k):
    """Indices of the k largest entries (ties broken by position)."""
    if values.size <= k:
        return np.arange(values.size)
    part = np.argpartition(-values, k - 1)[:k]
    return np.sort(part)


class _Prepared:
    """Per-polyhedron quantities reused by every working-set solve."""

    def __init__(self, P: Polyhedron):
        G, h = P.G, P.h
        d = P.dim
        norms = P.row_norms
        self.G, self.h = G, h
        self.safe = np.where(norms > 0, norms, 1.0)
        dist = np.abs(h) / self.safe
        radius = 1e3 * (1.0 + np.max(dist[norms > 0], initial=0.0))
        self.box_G = np.vstack([np.eye(d), -np.eye(d)])
        self.box_h = np.full(2 * d, radius)
        self.scale = 1.0 + np.max(np.abs(h))
        self.feas_tol = 1e-9 * (1.0 + np.abs(h))


def _lp_working_set(c, prep: _Prepared, in_W, batch):
    """Constraint generation: solve on a subset inside a large box, add the
    most violated constraints, repeat. ``in_W`` (bool mask) is updated in
    place. Returns ``(a, basis)`` or None whenever the answer might depend on
    the artificial box, so the caller falls back to the full LP.
    """
    G, h = prep.G, prep.h
    m = G.shape[0]
    for _ in range(m // max(batch, 1) + 2):
        idx = np.flatnonzero(in_W)
        Gs = np.vstack([G[idx], prep.box_G])
        hs = np.concatenate([h[idx], prep.box_h])
        status, basis, y = _solve_dual(Gs, hs, c, scale=prep.scale)
        if status != "optimal":
            return None
        k = len(idx)
        if np.any((basis >= k) & (y > PIVOT_TOL)):
            return None
        a = _primal_from_basis(Gs, hs, basis)
        viol = G @ a - h
        over = viol > prep.feas_tol
        if not over.any():
            keep = basis < k
            return a, idx[basis[keep]]
        bad = np.flatnonzero(over & ~in_W)
        if bad.size == 0:
            return None
        in_W[bad[_top(viol[bad] / prep.safe[bad], batch)]] = True
    return None


class SupportOracle:
    """Repeated LPs ``max c.a`` over one fixed polyhedron.

    Constraints that were binding at earlier optima seed the working set of
    later solves; every answer is still verified against all constraints.
    Optimal vertices are cached together with their basis: a cached vertex
    answers a new ``c`` directly when ``c`` lies in the cone spanned by the
    basis normals (the dual certificate ``G_B' y = c, y >= 0``).
    """

    def __init__(self, P: Polyhedron):
        self.P = P
        self.batch = 2 * P.dim + 2
        self.use_ws = P.m > 4 * self.batch
        self._verts = []     # vertex points
        self._duals = []     # inverse of G_B' for each cached vertex
        self._V = None
        if self.use_ws:
            self._prep = _Prepared(P)
            self._seen = np.zeros(P.m, dtype=bool)

    def _from_cache(self, c):
        if not self._verts:
            return None
        if self._V is None:
            self._V = np.array(self._verts)
            self._M = np.array(self._duals)
        scores = self._V @ c
        for k in np.argsort(-scores, kind="stable")[:3]:
            y = self._M[k] @ c
            if np.min(y) >= -1e-12 * (1.0 + np.max(np.abs(y))):
                return self._V[k]
        return None

    def _remember(self, a, active):
        d = self.P.dim
        if active.size != d:
            return
        try:
            M = np.linalg.inv(self.P.G[active].T)
        except np.linalg.LinAlgError:
            return
        if not np.all(np.isfinite(M)) or np.linalg.cond(self.P.G[active]) > 1e10:
            return
        self._verts.append(a)
        self._duals.append(M)
        self._V = None

    def maximize(self, c):
        c = np.asarray(c, dtype=float).ravel()
        if c.shape[0] != self.P.dim:
            raise InvalidParam(f"c has length {c.shape[0]}, polyhedron lives in R^{self.P.dim}")
        if self.use_ws:
            a = self._from_cache(c)
            if a is not None:
                return a, float(c @ a)
            in_W = self._seen.copy()
            cosine = (self.P.G @ c) / self._prep.safe
            in_W[_top(cosine, self.batch)] = True
            res = _lp_working_set(c, self._prep, in_W, self.batch)
            if res is not None:
                a, active = res
                self._seen[active] = True
                self._remember(a, active)
                return a, float(c @ a)
        a = _lp_full(c, self.P.G, self.P.h)
        return a, float(c @ a)


def lp_solve(c, P: Polyhedron, working_set: bool = True):
    """Maximise ``c . a`` over the polyhedron ``P``.

    Returns ``(point, value)``. Raises Infeasible if the set is empty and
    Unbounded if ``c . a`` grows without bound on it. Large problems go
    through exact constraint generation first; ``working_set=False`` runs
    the simplex on every constraint directly.
    """
    c = np.asarray(c, dtype=float).ravel()
    if c.shape[0] != P.dim:
        raise InvalidParam(f"c has length {c.shape[0]}, polyhedron lives in R^{P.dim}")
    if not working_set:
        a = _lp_full(c, P.G, P.h)
        return a, float(c @ a)
    return SupportOracle(P).maximize(c)
