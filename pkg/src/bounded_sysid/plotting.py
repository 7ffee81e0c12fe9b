"""SVG rendering of convergence curves."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

STYLE = {
    "svg.fonttype": "none",       # keep text as text
    "svg.hashsalt": "bounded-sysid",  # stable element ids, so identical reports give identical files
    "font.size": 9,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "lines.linewidth": 1.4,
}

LINESTYLES = ["-", "--", "-.", ":", (0, (5, 1, 1, 1, 1, 1)), (0, (1, 3))]
MARKERS = ["o", "s", "^", "D", "v", "x"]
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def slope_label(slope: float) -> str:
    if slope is None or not math.isfinite(slope):
        return "n/a"
    s = f"{slope:.2f}"
    return "0.00" if s == "-0.00" else s


def _positive(y):
    y = np.asarray(y, dtype=float)
    return np.where(y > 0, y, np.nan)


def emit_plot(report, path, title: str | None = None) -> None:
    """Log-log median curves with interquartile bands and the sample-complexity
    lower bound, saved as a self-contained SVG."""
    if not report.curves:
        raise ValueError("nothing to plot: the report has no curves")
    path = Path(path)
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(6.4, 4.2))
        FigureCanvasSVG(fig)
        ax = fig.add_subplot(1, 1, 1)
        for k, (method, c) in enumerate(report.curves.items()):
            T = np.asarray(c.T_grid, dtype=float)
            color = COLORS[k % len(COLORS)]
            ax.fill_between(T, _positive(c.q1), _positive(c.q3), color=color, alpha=0.18, lw=0)
            ax.plot(T, _positive(c.median), color=color, ls=LINESTYLES[k % len(LINESTYLES)],
                    marker=MARKERS[k % len(MARKERS)], ms=3,
                    label=f"{method.value} (slope {slope_label(c.slope)})")
        if report.thm1_curve:
            T, eps = zip(*report.thm1_curve)
            ax.plot(T, eps, color="k", lw=1.0, ls=(0, (2, 2)), label="lower bound (1/T)")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("trajectory length T")
        ax.set_ylabel(f"error ({report.config.error_norm.value}) / diameter")
        if title:
            ax.set_title(title)
        ax.grid(True, which="both", lw=0.3, alpha=0.5)
        ax.legend(loc="best", frameon=False)
        fig.tight_layout()
        try:
            fig.savefig(path, format="svg", metadata={"Date": None})
        except OSError as exc:
            raise OSError(f"cannot write SVG {path}: {exc.strerror or exc}") from exc
