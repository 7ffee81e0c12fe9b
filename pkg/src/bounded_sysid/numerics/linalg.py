"""Small dense linear algebra: pivoted solves, spectral norm, spectral radius."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from ..errors import DidNotConverge, InvalidParam, SingularMatrix

PIVOT_RTOL = 1e-12


def as_matrix(M, name="M") -> np.ndarray:
    """Coerce to a finite 2-D float array."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2:
        raise InvalidParam(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidParam(f"{name} has non-finite entries")
    return M


@njit(cache=True)
def _lu_kernel(LU, perm, threshold):
    d = LU.shape[0]
    for k in range(d):
        p = k
        for i in range(k + 1, d):
            if abs(LU[i, k]) > abs(LU[p, k]):
                p = i
        if abs(LU[p, k]) < threshold or LU[p, k] == 0.0:
            return k
        if p != k:
            for j in range(d):
                LU[k, j], LU[p, j] = LU[p, j], LU[k, j]
            perm[k], perm[p] = perm[p], perm[k]
        for i in range(k + 1, d):
            LU[i, k] /= LU[k, k]
            f = LU[i, k]
            for j in range(k + 1, d):
                LU[i, j] -= f * LU[k, j]
    return -1


@njit(cache=True)
def _lu_substitute(LU, perm, B):
    d = LU.shape[0]
    X = np.empty_like(B)
    for i in range(d):
        X[i] = B[perm[i]]
    for i in range(1, d):
        for k in range(i):
            X[i] -= LU[i, k] * X[k]
    for i in range(d - 1, -1, -1):
        for k in range(i + 1, d):
            X[i] -= LU[i, k] * X[k]
        X[i] /= LU[i, i]
    return X


def lu_factor(M):
    """LU factorisation with partial pivoting, ``P M = L U`` packed in one array.

    Returns ``(LU, perm)`` where ``perm[i]`` is the original row at position i.
    """
    M = as_matrix(M)
    d = M.shape[0]
    if M.shape != (d, d):
        raise InvalidParam(f"expected a square matrix, got {M.shape}")
    LU = np.ascontiguousarray(M.copy())
    perm = np.arange(d)
    scale = float(np.max(np.abs(M))) if M.size else 0.0
    threshold = PIVOT_RTOL * scale
    k = _lu_kernel(LU, perm, threshold)
    if k >= 0:
        raise SingularMatrix(f"pivot {k} has magnitude {abs(LU[k:, k]).max():.3e} "
                             f"(threshold {threshold:.3e})")
    return LU, perm


def lu_solve(LU, perm, B):
    B = np.asarray(B, dtype=float)
    X = _lu_substitute(LU, perm, np.ascontiguousarray(B.reshape(len(perm), -1)))
    return X.ravel() if B.ndim == 1 else X


def solve_linear(M, B, refine: int = 2):
    """Solve ``M X = B`` by pivoted LU plus a couple of refinement sweeps.

    Raises SingularMatrix when a pivot falls below 1e-12 times the largest
    entry of ``M``.
    """
    M = as_matrix(M)
    B = np.asarray(B, dtype=float)
    if B.shape[0] != M.shape[0]:
        raise InvalidParam(f"B has {B.shape[0]} rows, M is {M.shape}")
    LU, perm = lu_factor(M)
    X = lu_solve(LU, perm, B)
    for _ in range(refine):
        R = B - M @ X
        if not np.any(R):
            break
        X = X + lu_solve(LU, perm, R)
    return X


def operator_norm(M, seed: int = 0, max_squarings: int = 64) -> float:
    """Largest singular value of ``M``.

    Power iteration on ``M^T M`` where each step applies the current power of
    the Gram matrix, which is squared (and renormalised) between steps, so the
    spectral gap is squared every iteration. Two seeded random starts are
    used and the larger Rayleigh quotient is kept.
    """
    M = as_matrix(M)
    if not np.any(M):
        return 0.0
    s = np.max(np.abs(M))
    Ms = M / s
    S = Ms.T @ Ms
    d = S.shape[0]
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(2):
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        P = S / np.max(np.abs(S))
        prev = -1.0
        for _ in range(max_squarings):
            w = P @ v
            nw = np.linalg.norm(w)
            if nw == 0.0:
                break
            v = w / nw
            lam = float(v @ S @ v)
            if abs(lam - prev) <= 1e-15 * lam:
                break
            prev = lam
            P = P @ P
            mx = np.max(np.abs(P))
            if mx == 0.0:
                break
            P /= mx
        # one plain step guards against a start nearly orthogonal to the top vector
        w = S @ v
        if np.linalg.norm(w) > 0:
            v = w / np.linalg.norm(w)
        best = max(best, float(v @ S @ v))
    return s * math.sqrt(max(best, 0.0))


def spectral_radius(M, rtol: float = 1e-5, max_k: int = 60, strict: bool = True) -> float:
    """Spectral radius via Gelfand's formula, rho = lim ||M^(2^k)||^(1/2^k).

    The power is squared repeatedly and renormalised to unit max entry; the
    log of the discarded scale is accumulated so nothing over/underflows.
    Stops once two successive estimates agree to ``rtol``. With
    ``strict=False`` the last estimate is returned instead of raising
    DidNotConverge at ``max_k`` squarings.
    """
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise InvalidParam(f"spectral_radius needs a square matrix, got {M.shape}")
    s = np.max(np.abs(M))
    if s == 0.0:
        return 0.0
    P = M / s
    log_scale = math.log(s)  # log of the factor removed from M^(2^k)
    est_prev = None
    for k in range(max_k + 1):
        nrm = operator_norm(P)
        if nrm == 0.0:
            return 0.0
        est = math.exp((log_scale + math.log(nrm)) / 2.0 ** k)
        if est_prev is not None and abs(est - est_prev) < rtol * est:
            return est
        est_prev = est
        if k == max_k:
            break
        P = P @ P
        mx = np.max(np.abs(P))
        if mx == 0.0:
            return 0.0
        P /= mx
        log_scale = 2.0 * log_scale + math.log(mx)
    if strict:
        raise DidNotConverge(f"Gelfand iteration did not stabilise after {max_k} squarings",
                             last=est_prev)
    return est_prev
