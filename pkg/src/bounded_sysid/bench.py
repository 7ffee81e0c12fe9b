"""Convergence experiment: error of each estimator against trajectory length.

Each trial draws its own system and one long trajectory from keyed
substreams of the master seed; every method is then evaluated on prefixes
of that trajectory. Results are therefore identical whatever the number
of worker processes.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from .errors import BoundedSysIdError, InvalidParam
from .estimators import (ErrorNorm, Method, cls_estimate, diameter_directions, directional_widths,
                         estimation_error, ols_estimate, ols_sme_estimate, sme_polytope)
from .numerics import fit_loglog_slope
from .parallel import pmap
from .system import make_noise_model, make_rng, random_system, simulate
from .theory import thm1_error_lower_curve

DEFAULT_SEED = 20240611
ALL_METHODS = (Method.OLS, Method.OLS_SME, Method.CLS, Method.SME_DIAMETER)


def default_T_grid(lo=100, hi=10_000, count=20) -> tuple[int, ...]:
    grid = np.unique(np.round(np.logspace(math.log10(lo), math.log10(hi), count)).astype(int))
    return tuple(int(t) for t in grid)


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 4
    entry_low: float = -5.0
    entry_high: float = 5.0
    target_rho: float = 0.7
    noise_kind: str = "uniform"
    w_bar: float = 2.0
    sigma: float | None = None
    T_grid: tuple = field(default_factory=default_T_grid)
    trials: int = 50
    methods: tuple = ALL_METHODS
    error_norm: ErrorNorm = ErrorNorm.SPECTRAL
    diameter_directions: int = 200
    master_seed: int = DEFAULT_SEED
    overlay_delta: float = 0.99

    def __post_init__(self):
        set_ = partial(object.__setattr__, self)
        set_("T_grid", tuple(int(t) for t in self.T_grid))
        set_("methods", tuple(Method.parse(m) for m in self.methods))
        set_("error_norm", ErrorNorm.parse(self.error_norm))
        self.validate()

    def validate(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidParam(f"n must be a positive integer, got {self.n}")
        if self.entry_low > self.entry_high:
            raise InvalidParam("entry_low must not exceed entry_high")
        if not 0.0 < self.target_rho < 1.0:
            raise InvalidParam(f"target_rho must lie in (0, 1), got {self.target_rho}")
        make_noise_model(self.noise_kind, self.w_bar, self.sigma)
        if not self.T_grid:
            raise InvalidParam("T_grid is empty")
        if any(b <= a for a, b in zip(self.T_grid, self.T_grid[1:])):
            raise InvalidParam("T_grid must be strictly increasing")
        if self.T_grid[0] < self.n + 1:
            raise InvalidParam(f"T_grid starts at {self.T_grid[0]}, needs >= n + 1 = {self.n + 1}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise InvalidParam(f"trials must be >= 1, got {self.trials}")
        if len(set(self.methods)) != len(self.methods):
            raise InvalidParam("methods contains duplicates")
        if self.diameter_directions < 0:
            raise InvalidParam("diameter_directions must be >= 0")
        if not 0 <= self.master_seed < 2 ** 64:
            raise InvalidParam("master_seed must be a 64-bit unsigned integer")

    @property
    def noise(self):
        return make_noise_model(self.noise_kind, self.w_bar, self.sigma)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = [m.value for m in self.methods]
        d["error_norm"] = self.error_norm.value
        d["T_grid"] = list(self.T_grid)
        return d


@dataclass
class TrialResult:
    trial: int
    A_true: np.ndarray
    values: dict          # Method -> array over T_grid, NaN where the cell failed
    sse: dict             # Method -> residual SSE over T_grid (estimators only)
    failures: list        # (T, method value, error class name)


def trial_system(cfg: ExperimentConfig, trial: int):
    return random_system(cfg.n, cfg.entry_low, cfg.entry_high, cfg.target_rho,
                         make_rng(cfg.master_seed, trial, "system"))


def trial_trajectory(cfg: ExperimentConfig, trial: int, sys=None):
    sys = sys or trial_system(cfg, trial)
    return simulate(sys, cfg.noise, cfg.T_grid[-1], make_rng(cfg.master_seed, trial, "noise"))


def run_trial(cfg: ExperimentConfig, trial: int) -> TrialResult:
    sys = trial_system(cfg, trial)
    traj = trial_trajectory(cfg, trial, sys)
    k = len(cfg.T_grid)
    values = {m: np.full(k, np.nan) for m in cfg.methods}
    sse = {m: np.full(k, np.nan) for m in cfg.methods if m is not Method.SME_DIAMETER}
    failures = []
    dirs = None
    if Method.SME_DIAMETER in cfg.methods:
        dirs = diameter_directions(cfg.n, cfg.diameter_directions,
                                   make_rng(cfg.master_seed, trial, "directions"))
    w = cfg.w_bar

    def attempt(j, T, method, fn):
        try:
            return fn()
        except BoundedSysIdError as exc:
            failures.append((T, method.value, type(exc).__name__))
            return None

    for j, T in enumerate(cfg.T_grid):
        sub = traj.prefix(T)
        P = sme_polytope(sub, w)
        ols = attempt(j, T, Method.OLS, lambda: ols_estimate(sub))
        blend = None
        for m in cfg.methods:
            if m is Method.SME_DIAMETER:
                widths = attempt(j, T, m, lambda: directional_widths(P, dirs))
                if widths is not None:
                    values[m][j] = float(np.max(widths))
                continue
            if m is Method.OLS:
                rep = ols
                if rep is None:
                    continue
            elif m is Method.OLS_SME:
                if ols is None:
                    failures.append((T, m.value, "SingularGram"))
                    continue
                rep = blend = attempt(j, T, m,
                                      lambda: ols_sme_estimate(sub, w, ols=ols, polytope=P))
            else:
                rep = attempt(j, T, m,
                              lambda: cls_estimate(sub, w, ols=ols, polytope=P, blend=blend))
            if rep is None:
                continue
            values[m][j] = estimation_error(rep.A_hat, sys.A, cfg.error_norm)
            sse[m][j] = rep.residual_sse
    return TrialResult(trial, sys.A, values, sse, failures)


@dataclass
class ConvergenceCurve:
    method: Method
    T_grid: tuple
    values: np.ndarray      # (trials, len(T_grid)), NaN = missing cell
    median: np.ndarray
    q1: np.ndarray
    q3: np.ndarray
    mean: np.ndarray
    slope: float
    intercept: float
    fit_T_min: int
    missing: int


def fit_window(T_grid) -> tuple:
    """Upper half of the grid, where the asymptotic rate is fitted."""
    return tuple(T_grid[len(T_grid) // 2:])


def aggregate(method: Method, T_grid, values: np.ndarray) -> ConvergenceCurve:
    values = np.asarray(values, dtype=float)
    k = len(T_grid)
    med, q1, q3, mean = (np.full(k, np.nan) for _ in range(4))
    for j in range(k):
        col = values[:, j]
        col = col[~np.isnan(col)]
        if col.size:
            q1[j], med[j], q3[j] = np.percentile(col, [25, 50, 75])
            mean[j] = col.mean()
    window = fit_window(T_grid)
    start = k - len(window)
    pts = [(T_grid[j], med[j]) for j in range(start, k) if np.isfinite(med[j]) and med[j] > 0]
    slope = intercept = math.nan
    if len(pts) >= 2 and len({t for t, _ in pts}) >= 2:
        slope, intercept = fit_loglog_slope(pts)
    return ConvergenceCurve(method, tuple(T_grid), values, med, q1, q3, mean, slope, intercept,
                            window[0], int(np.isnan(values).sum()))


@dataclass
class BenchReport:
    config: ExperimentConfig
    curves: dict                      # Method -> ConvergenceCurve
    trials: list                      # TrialResult per trial
    thm1_curve: list                  # (T, eps) pairs, empty if the bound is vacuous
    elapsed_s: float
    workers: int

    @property
    def missing_cells(self) -> int:
        return sum(c.missing for c in self.curves.values())

    def slopes(self) -> dict:
        return {m.value: c.slope for m, c in self.curves.items()}

    def summary(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "slopes": self.slopes(),
            "fit_T_min": fit_window(self.config.T_grid)[0],
            "missing_cells": self.missing_cells,
            "elapsed_s": self.elapsed_s,
            "workers": self.workers,
        }


def run_convergence_experiment(cfg: ExperimentConfig, workers: int = 1) -> BenchReport:
    t0 = time.perf_counter()
    trials = pmap(partial(run_trial, cfg), range(cfg.trials), workers)
    curves = {}
    for m in cfg.methods:
        vals = np.vstack([tr.values[m] for tr in trials])
        curves[m] = aggregate(m, cfg.T_grid, vals)
    model = cfg.noise
    thm1 = []
    if 2 * cfg.overlay_delta / cfg.n < 1:
        thm1 = thm1_error_lower_curve(cfg.T_grid, cfg.overlay_delta, cfg.n, model.c_w_bar, cfg.w_bar)
    return BenchReport(cfg, curves, trials, thm1, time.perf_counter() - t0, workers)


# -- output -------------------------------------------------------------------

def _fmt(v) -> str:
    return format(float(v), ".17g")


def emit_csv(report: BenchReport, path) -> None:
    """Long format ``method,trial,T,value``; per-T medians follow each method
    as ``method,MEDIAN,T,value`` rows. Missing cells are written as ``nan``."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["method", "trial", "T", "value"])
            for m, c in report.curves.items():
                for i, tr in enumerate(report.trials):
                    for j, T in enumerate(c.T_grid):
                        wr.writerow([m.value, tr.trial, T, _fmt(c.values[i, j])])
                for j, T in enumerate(c.T_grid):
                    wr.writerow([m.value, "MEDIAN", T, _fmt(c.median[j])])
    except OSError as exc:
        raise OSError(f"cannot write CSV {path}: {exc.strerror or exc}") from exc


def emit_summary_csv(report: BenchReport, path) -> None:
    """Per-(method, T) aggregates including the means: ``method,T,median,q1,q3,mean,valid``."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["method", "T", "median", "q1", "q3", "mean", "valid"])
            for m, c in report.curves.items():
                valid = (~np.isnan(c.values)).sum(axis=0)
                for j, T in enumerate(c.T_grid):
                    wr.writerow([m.value, T, _fmt(c.median[j]), _fmt(c.q1[j]), _fmt(c.q3[j]),
                                 _fmt(c.mean[j]), int(valid[j])])
    except OSError as exc:
        raise OSError(f"cannot write CSV {path}: {exc.strerror or exc}") from exc


def read_csv(path) -> dict:
    """Parse an ``emit_csv`` file into ``{(method, trial_or_MEDIAN, T): value}``."""
    out = {}
    with Path(path).open(newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header != ["method", "trial", "T", "value"]:
            raise InvalidParam(f"{path}: unexpected header {header}")
        for method, trial, T, value in rd:
            key = trial if trial == "MEDIAN" else int(trial)
            out[(method, key, int(T))] = float(value)
    return out
