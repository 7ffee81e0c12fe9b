"""Hildreth's dual coordinate ascent for ``min 1/2 a'Qa - b'a  s.t.  G a <= h``.

Each multiplier is updated in turn by exact line search on the dual and
clipped at zero; the primal iterate is kept as ``a = Q^{-1}(b - G' lam)``.
The constraints of interest number in the tens of thousands while ``d`` is
tiny, so the sweeps run over a working set that grows by the most violated
constraints until the iterate is feasible for every row. Once the sweeps
meet the tolerance, the equality KKT system on the positive multipliers is
solved directly; that answer replaces the iterate when it is dual feasible
and primal feasible.

At degenerate optima (more active constraints than dimensions) the sweeps
can converge very slowly. When a working set exhausts its sweep budget the
subproblem is solved exactly instead, as a least-distance program via
Lawson-Hanson NNLS.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..errors import Infeasible, InvalidParam, NotConverged, SingularMatrix
from .linalg import as_matrix, lu_factor, lu_solve, solve_linear
from .lp import is_feasible
from .polyhedron import NORMAL_EPS, Polyhedron

DEFAULT_TOL = 1e-8
SWEEPS_PER_SET = 500


@dataclass
class QpSolution:
    point: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    converged: bool
    multipliers: np.ndarray = field(repr=False)


@njit(cache=True)
def _hildreth(G, h, K, Hd, a0, lam, tol, max_updates):
    m, d = G.shape
    a = a0.copy()
    for i in range(m):
        if lam[i] != 0.0:
            for k in range(d):
                a[k] -= K[k, i] * lam[i]
    updates = 0
    while updates < max_updates:
        for i in range(m):
            s = 0.0
            for k in range(d):
                s += G[i, k] * a[k]
            new = lam[i] + (s - h[i]) / Hd[i]
            if new < 0.0:
                new = 0.0
            delta = new - lam[i]
            if delta != 0.0:
                for k in range(d):
                    a[k] -= K[k, i] * delta
                lam[i] = new
        updates += m
        # recompute the primal iterate from scratch so drift cannot hide violations
        for k in range(d):
            a[k] = a0[k]
        for i in range(m):
            if lam[i] != 0.0:
                for k in range(d):
                    a[k] -= K[k, i] * lam[i]
        worst = 0.0
        for i in range(m):
            s = -h[i]
            for k in range(d):
                s += G[i, k] * a[k]
            if s > worst:
                worst = s
            c = abs(lam[i] * s)
            if c > worst:
                worst = c
        if worst <= tol:
            return a, updates, True
    return a, updates, False


def _polish(Q, b, G, h, lam, tol):
    """Solve the equality KKT system on {lam > 0}; None if it is not a valid optimum."""
    act = np.flatnonzero(lam > 0)
    d = Q.shape[0]
    k = act.size
    if k == 0 or k > d:
        return None
    GA = G[act]
    KKT = np.zeros((d + k, d + k))
    KKT[:d, :d] = Q
    KKT[:d, d:] = GA.T
    KKT[d:, :d] = GA
    rhs = np.concatenate([b, h[act]])
    try:
        sol = solve_linear(KKT, rhs)
    except SingularMatrix:
        return None
    a, la = sol[:d], sol[d:]
    if np.any(la < 0):
        return None
    if np.max(G @ a - h, initial=0.0) > tol:
        return None
    new = np.zeros_like(lam)
    new[act] = la
    return a, new


def nnls(A, y, max_iter=None):
    """Lawson-Hanson: ``argmin ||A x - y||`` subject to ``x >= 0``.

    Returns None if the iteration cap is hit.
    """
    m, n = A.shape
    max_iter = max_iter or 30 * (n + 1)
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    tol = 10 * np.finfo(float).eps * np.abs(A).sum(axis=0).max(initial=1.0) * max(m, n)
    w = A.T @ (y - A @ x)
    it = 0
    while (~passive).any() and np.max(w[~passive]) > tol:
        j = int(np.argmax(np.where(passive, -np.inf, w)))
        passive[j] = True
        while True:
            it += 1
            if it > max_iter:
                return None
            z = np.zeros(n)
            z[passive] = np.linalg.lstsq(A[:, passive], y, rcond=None)[0]
            if np.all(z[passive] > 0):
                break
            neg = passive & (z <= 0)
            alpha = np.min(x[neg] / (x[neg] - z[neg]))
            x = x + alpha * (z - x)
            passive &= x > tol
            x[~passive] = 0.0
        x = z
        w = A.T @ (y - A @ x)
    return x


def _ldp_solve(Q, b, G, h):
    """Exact solution of the QP on a (small) constraint set via least distance.

    With ``Q = L L'`` and ``a = Q^-1 b + L^-T z`` the problem becomes
    ``min ||z||`` subject to ``E z >= f``. Returns ``(a, lam)``, the string
    "infeasible", or None if NNLS failed.
    """
    L = np.linalg.cholesky(Q)
    a0 = solve_linear(Q, b)
    E = -np.linalg.solve(L, G.T).T          # -G L^-T
    f = G @ a0 - h
    d = Q.shape[0]
    M = np.vstack([E.T, f[None, :]])
    e = np.zeros(d + 1)
    e[d] = 1.0
    u = nnls(M, e)
    if u is None:
        return None
    r = M @ u - e
    if np.linalg.norm(r) <= 1e-12 or r[d] >= 0:
        return "infeasible"
    z = -r[:d] / r[d]
    lam = u / -r[d]
    a = a0 + np.linalg.solve(L.T, z)
    return a, lam


def _top(values, k):
    if values.size <= k:
        return np.arange(values.size)
    return np.sort(np.argpartition(-values, k - 1)[:k])


def kkt_residual(Q, b, G, h, a, lam):
    """max of (constraint violation, complementarity, stationarity, dual sign)."""
    viol = G @ a - h
    feas = max(0.0, float(np.max(viol, initial=0.0)))
    comp = float(np.max(np.abs(lam * viol), initial=0.0))
    stat = float(np.max(np.abs(Q @ a - b + G.T @ lam), initial=0.0))
    sign = max(0.0, -float(np.min(lam, initial=0.0)))
    return max(feas, comp, stat, sign)


def qp_solve(Q, b, P: Polyhedron, tol: float = DEFAULT_TOL, max_iter: int | None = None,
             lambda_cap: float = 1e15, exact_fallback: bool = True) -> QpSolution:
    """Minimise ``1/2 a'Qa - b'a`` over ``P`` for positive definite ``Q``.

    ``max_iter`` counts single-multiplier updates (default 200 per
    constraint). Raises Infeasible when the constraints are empty, and
    NotConverged (carrying the last iterate) when the budget runs out. With
    ``exact_fallback`` a working set whose sweeps stall, or that is left
    once the budget is spent, is solved exactly instead; NotConverged then
    only surfaces if that also fails.
    """
    Q = as_matrix(Q, "Q")
    b = np.asarray(b, dtype=float).ravel()
    d = Q.shape[0]
    if Q.shape != (d, d) or b.shape[0] != d or P.dim != d:
        raise InvalidParam(f"shape mismatch: Q {Q.shape}, b {b.shape}, P in R^{P.dim}")
    m_orig = P.m
    keep = P.row_norms >= NORMAL_EPS
    G, h = P.G[keep], P.h[keep]
    if np.any(P.h[~keep] < 0):
        raise Infeasible("a constraint with zero normal has negative offset")
    m = G.shape[0]
    if max_iter is None:
        max_iter = 200 * max(m, 1)

    LU, perm = lu_factor(Q)
    a0 = lu_solve(LU, perm, b)

    def finish(a, lam_w, W, updates, converged):
        lam = np.zeros(m)
        lam[W] = lam_w
        full = np.zeros(m_orig)
        full[np.flatnonzero(keep)] = lam
        res = kkt_residual(Q, b, G, h, a, lam)
        obj = float(0.5 * a @ Q @ a - b @ a)
        return QpSolution(a, obj, res, updates, converged and res <= tol, full)

    if m == 0:
        return finish(a0, np.zeros(0), np.zeros(0, dtype=int), 0, True)
    viol = G @ a0 - h
    if np.max(viol) <= tol:
        return finish(a0, np.zeros(0), np.zeros(0, dtype=int), 0, True)

    batch = 2 * d + 2
    norms = P.row_norms[keep]
    in_W = np.zeros(m, dtype=bool)
    bad = np.flatnonzero(viol > tol)
    in_W[bad[_top(viol[bad] / norms[bad], batch)]] = True
    lam_all = np.zeros(m)
    updates = 0
    a = a0
    while True:
        W = np.flatnonzero(in_W)
        GW = np.ascontiguousarray(G[W])
        hW = h[W].copy()
        KW = np.ascontiguousarray(lu_solve(LU, perm, GW.T))
        Hd = np.einsum("ij,ji->i", GW, KW)
        lamW = lam_all[W].copy()
        budget = max_iter - updates
        if budget <= 0 and not exact_fallback:
            break
        ok, diverged = False, False
        if budget > 0:
            sub_budget = min(budget, SWEEPS_PER_SET * W.size) if exact_fallback else budget
            a, used, ok = _hildreth(GW, hW, KW, Hd, a0, lamW, tol, sub_budget)
            updates += used
            lam_all[W] = lamW
            diverged = np.max(lamW, initial=0.0) > lambda_cap
        if not exact_fallback and (not ok or diverged):
            if not is_feasible(Polyhedron(GW, hW)):
                raise Infeasible(f"constraints are infeasible ({W.size} of {m} rows certify it)")
            break
        if not ok or diverged:
            exact = _ldp_solve(Q, b, GW, hW)
            if exact == "infeasible" or (exact is None and diverged):
                if not is_feasible(Polyhedron(GW, hW)):
                    raise Infeasible(f"constraints are infeasible ({W.size} of {m} rows certify it)")
            if exact is None or isinstance(exact, str):
                if updates < max_iter and not diverged:
                    continue
                break
            a, lamW = exact
            if np.max(GW @ a - hW) > tol:
                break
            lam_all[W] = lamW
        pol = _polish(Q, b, GW, hW, lamW, tol)
        if pol is not None:
            a, lamW = pol
            lam_all[W] = lamW
        viol = G @ a - h
        bad = np.flatnonzero((viol > tol) & ~in_W)
        if bad.size == 0:
            return finish(a, lam_all[W], W, updates, True)
        in_W[bad[_top(viol[bad] / norms[bad], batch)]] = True

    if not is_feasible(Polyhedron(G, h)):
        raise Infeasible("constraints are infeasible")
    W = np.flatnonzero(in_W)
    sol = finish(a, lam_all[W], W, updates, False)
    raise NotConverged(f"Hildreth iteration hit max_iter={max_iter} "
                       f"(kkt residual {sol.kkt_residual:.3e})", solution=sol)


def project_polytope(p, P: Polyhedron, tol: float = DEFAULT_TOL,
                     max_iter: int | None = None) -> QpSolution:
    """Euclidean projection of ``p`` onto ``P``."""
    p = np.asarray(p, dtype=float).ravel()
    return qp_solve(np.eye(p.shape[0]), p, P, tol=tol, max_iter=max_iter)
