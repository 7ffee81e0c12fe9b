from __future__ import annotations

import numpy as np

from ..errors import DegenerateInput


def fit_loglog_slope(points):
    """Least-squares line through ``(log T, log err)``; returns ``(slope, intercept)``.

    Natural logs, so ``err ~ exp(intercept) * T**slope``.
    """
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise DegenerateInput("need at least two (T, err) pairs")
    T, err = pts[:, 0], pts[:, 1]
    if np.any(T <= 0) or np.any(err <= 0) or not np.all(np.isfinite(err)):
        raise DegenerateInput("T and err must be positive and finite")
    x, y = np.log(T), np.log(err)
    xc = x - x.mean()
    sxx = xc @ xc
    if sxx == 0.0:
        raise DegenerateInput("all T values are equal")
    slope = float(xc @ (y - y.mean()) / sxx)
    return slope, float(y.mean() - slope * x.mean())
