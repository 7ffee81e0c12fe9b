"""Closed-form bounds for scalar/LTI identification and Monte-Carlo checks of them.

Monte-Carlo routines split their replications into fixed blocks of
``BLOCK`` reps. Block ``k`` always draws from the substream
``make_rng(seed, tag, k)``, so the numbers do not depend on how many
workers process the blocks.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .errors import InvalidParam
from .parallel import pmap
from .system import NoiseKind, NoiseModel, make_noise_model, make_rng, simulate_scalar_batch

BLOCK = 10_000


def _positive(**kw):
    for name, v in kw.items():
        if not (isinstance(v, (int, float, np.floating, np.integer)) and math.isfinite(v) and v > 0):
            raise InvalidParam(f"{name} must be positive and finite, got {v!r}")


def _stable(a, name="a"):
    if not (math.isfinite(a) and abs(a) < 1.0):
        raise InvalidParam(f"|{name}| must be < 1, got {a!r}")


def _blocks(reps: int):
    return [min(BLOCK, reps - s) for s in range(0, reps, BLOCK)]


# -- sample-complexity lower bound --------------------------------------------

def _thm1_check(delta, n, c_w_bar, w_bar):
    _positive(c_w_bar=c_w_bar, w_bar=w_bar)
    if not 0.0 < delta < 1.0:
        raise InvalidParam(f"delta must lie in (0, 1), got {delta}")
    if int(n) != n or n < 1:
        raise InvalidParam(f"n must be a positive integer, got {n}")
    factor = 1.0 - 2.0 * delta / n
    if factor <= 0.0:
        warnings.warn(f"2*delta/n = {2 * delta / n:.4g} >= 1: the sample lower bound is vacuous",
                      stacklevel=3)
        return 0.0
    return factor


def thm1_sample_lower_bound(eps, delta, n, c_w_bar, w_bar) -> float:
    """Samples needed before any estimator reaches spectral error ``eps``
    with probability ``delta``: ``(1 - 2 delta/n) / (4 c_w_bar w_bar eps)``.

    Returns 0.0 (with a warning) when ``2 delta / n >= 1``.
    """
    _positive(eps=eps)
    factor = _thm1_check(delta, n, c_w_bar, w_bar)
    if factor == 0.0:
        return 0.0
    return factor / (4.0 * c_w_bar * w_bar * eps)


def thm1_error_lower_curve(T_grid, delta, n, c_w_bar, w_bar) -> list[tuple[float, float]]:
    """Error level below which no estimator can get with ``T`` samples."""
    factor = _thm1_check(delta, n, c_w_bar, w_bar)
    out = []
    for T in T_grid:
        _positive(T=T)
        out.append((float(T), factor / (4.0 * c_w_bar * w_bar * T)))
    return out


# -- total variation between two scalar trajectory laws ----------------------

@dataclass(frozen=True)
class TvBound:
    value: float
    vacuous: bool


def lemma1_tv_upper_bound(mu, eps, w_bar, c_w_bar, T) -> TvBound:
    """TV bound between trajectories under ``a = mu +- eps``.

    Raises InvalidParam when the small-eps conditions of the lemma fail.
    """
    _positive(eps=eps, w_bar=w_bar, c_w_bar=c_w_bar, T=T)
    if not abs(mu) + eps < 1.0:
        raise InvalidParam(f"requires |mu| + eps < 1 (got {abs(mu) + eps:.6g})")
    edge = max(abs(mu + eps), abs(mu - eps))
    limit = (1.0 - edge) / (2.0 * c_w_bar * w_bar)
    if not eps < limit:
        raise InvalidParam(f"requires eps < (1 - max|mu +- eps|)/(2 c_w_bar w_bar) = {limit:.6g}, "
                           f"got eps = {eps}")
    m = 1.0 - abs(mu)
    value = 2.0 * c_w_bar * eps * w_bar * T * m / (m * m - eps * eps)
    return TvBound(value, value > 1.0)


@dataclass(frozen=True)
class TvEstimate:
    estimate: float
    std_error: float
    samples: int


def _escape_count(a_true, a_alt, w_bar, T, seed, tag, job):
    """Trajectories under ``a_true`` leaving the support of the ``a_alt`` law."""
    n, k = job
    rng = make_rng(seed, tag, k)
    W = rng.uniform(-w_bar, w_bar, size=(n, T))
    x = W[:, 0].copy()
    hit = np.zeros(n, dtype=bool)
    for t in range(1, T):
        nxt = a_true * x + W[:, t]
        hit |= np.abs(nxt - a_alt * x) > w_bar
        x = nxt
    return int(hit.sum())


def _escape_prob(a_true, a_alt, w_bar, T, samples, seed, tag, workers):
    sizes = _blocks(samples)
    fn = partial(_escape_count, a_true, a_alt, w_bar, T, seed, tag)
    hits = pmap(fn, [(s, k) for k, s in enumerate(sizes)], workers)
    return sum(hits) / samples


def empirical_tv_uniform(a1, a2, w_bar, T, samples, seed=0, workers=1) -> TvEstimate:
    """Monte-Carlo TV distance between the laws of ``x_1..x_T`` under ``a1``
    and ``a2`` with uniform noise on ``[-w_bar, w_bar]``.

    Both joint densities take only the values 0 and ``(2 w_bar)^-T``, so
    TV = (P1(f2 = 0) + P2(f1 = 0)) / 2, i.e. an average of two escape
    probabilities, each estimated from ``samples`` trajectories.
    """
    _stable(a1, "a1")
    _stable(a2, "a2")
    _positive(w_bar=w_bar)
    if int(T) != T or T < 1 or int(samples) != samples or samples < 1:
        raise InvalidParam(f"T and samples must be positive integers, got {T}, {samples}")
    T, samples = int(T), int(samples)
    if a1 == a2 or T == 1:
        return TvEstimate(0.0, 0.0, samples)
    p1 = _escape_prob(a1, a2, w_bar, T, samples, seed, "tv-first", workers)
    p2 = _escape_prob(a2, a1, w_bar, T, samples, seed, "tv-second", workers)
    se = 0.5 * math.sqrt((p1 * (1 - p1) + p2 * (1 - p2)) / samples)
    return TvEstimate(0.5 * (p1 + p2), se, samples)


# -- fluctuation of the summed squared states --------------------------------

def lemma3_variance_bound(a, w_bar, T) -> float:
    """Upper bound on ``E[(sum_t (x_t^2 - E x_t^2))^2]`` for the scalar system.

    Uses ``(1 - |a|)^4``, the form that holds for negative ``a`` too.
    """
    _stable(a)
    _positive(w_bar=w_bar, T=T)
    return w_bar ** 4 * (1 + a * a) / ((1 - abs(a)) ** 4 * (1 - a * a)) * T


def _squared_sums(a, model, T, seed, job):
    size, k = job
    X = simulate_scalar_batch(a, model, T, size, make_rng(seed, "lemma3", k))
    X2 = X[:, 1:] ** 2
    return X2.sum(axis=0), X2.sum(axis=1)


def lemma3_mc_check(a, model: NoiseModel, T, reps, seed=0, workers=1) -> tuple[float, float]:
    """(empirical, bound). Per-t means ``E x_t^2`` are estimated from the
    same pool, which biases the empirical value by O(1/reps); use
    ``reps >= 1e4``."""
    _stable(a)
    if int(T) != T or T < 1 or int(reps) != reps or reps < 2:
        raise InvalidParam(f"T >= 1 and reps >= 2 must be integers, got {T}, {reps}")
    T, reps = int(T), int(reps)
    parts = pmap(partial(_squared_sums, a, model, T, seed),
                 [(s, k) for k, s in enumerate(_blocks(reps))], workers)
    per_t = sum(p[0] for p in parts) / reps
    Z = np.concatenate([p[1] for p in parts])
    S = Z - per_t.sum()
    return float(np.mean(S * S)), lemma3_variance_bound(a, model.w_bar, T)


# -- probability upper bound -------------------------------------------------

@dataclass(frozen=True)
class Thm2Constants:
    """Universal constants of the upper-bound theorem. Their numeric values
    are never pinned down, so the defaults of 1.0 are placeholders."""

    C1: float = 1.0
    C2: float = 1.0
    C5: float = 1.0
    placeholder: bool = field(default=True, compare=False)

    def __post_init__(self):
        _positive(C1=self.C1, C2=self.C2, C5=self.C5)

    @classmethod
    def given(cls, C1=1.0, C2=1.0, C5=1.0) -> "Thm2Constants":
        return cls(C1, C2, C5, placeholder=False)

    @classmethod
    def from_c3(cls, C1, C2, C3) -> "Thm2Constants":
        return cls(C1, C2, 2.0 * math.exp(C3), placeholder=False)

    def c4(self, a, w_bar, sigma_w) -> float:
        return c4_constant(a, w_bar, sigma_w, self.C1)


def c4_constant(a, w_bar, sigma_w, C1) -> float:
    _stable(a)
    _positive(w_bar=w_bar, sigma_w=sigma_w, C1=C1)
    r4 = (w_bar / sigma_w) ** 4
    a2 = a * a
    inner = (1.0 / (1 - a2) ** 2
             + r4 / (1 - a2 * a2)
             + r4 * (1 + a2) / ((1 - abs(a)) ** 4 * (1 - a2)))
    return C1 * inner ** 0.2


def thm2_branches(a, eps, T, sigma_w, w_bar, consts: Thm2Constants | None = None):
    """The two terms whose minimum bounds ``P(|a_hat - a| <= eps)``."""
    consts = consts or Thm2Constants()
    _stable(a)
    _positive(eps=eps, T=T, sigma_w=sigma_w, w_bar=w_bar)
    if T < 1:
        raise InvalidParam(f"T must be >= 1, got {T}")
    c4 = consts.c4(a, w_bar, sigma_w)
    first = eps * math.sqrt(T) / (math.sqrt(2 * math.pi) * sigma_w) + c4 * T ** -0.2
    expo = consts.C2 * (1 - a) ** 4 * (1 - a * a) / (2 * w_bar ** 2 * T * math.log(2))
    second = consts.C5 * math.exp(-expo)
    return first, second


def thm2_probability_upper_bound(a, eps, T, sigma_w, w_bar,
                                 consts: Thm2Constants | None = None) -> float:
    consts = consts or Thm2Constants()
    if consts.placeholder:
        warnings.warn("universal constants C1, C2, C5 are placeholders (1.0); "
                      "the value is illustrative only", stacklevel=2)
    first, second = thm2_branches(a, eps, T, sigma_w, w_bar, consts)
    return min(1.0, max(0.0, min(first, second)))


def state_envelope_bound(a, w_bar) -> float:
    """``|x_t| < w_bar / (1 - |a|)`` for every t along a scalar trajectory from 0."""
    _stable(a)
    _positive(w_bar=w_bar)
    return w_bar / (1.0 - abs(a))


def _envelope_max(a, model, T, seed, job):
    size, k = job
    X = simulate_scalar_batch(a, model, T, size, make_rng(seed, "envelope", k))
    return float(np.max(np.abs(X)))


def envelope_max_state(a, model: NoiseModel, T, reps, seed=0, workers=1) -> float:
    """Largest ``|x_t|`` over ``reps`` simulated trajectories of length T."""
    _stable(a)
    vals = pmap(partial(_envelope_max, a, model, int(T), seed),
                [(s, k) for k, s in enumerate(_blocks(int(reps)))], workers)
    return max(vals)


# -- verification suites ------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    suite: str
    label: str
    passed: bool
    margin: float
    detail: str


TV_GRID = {"mu": 0.0, "eps": (0.01, 0.02, 0.05), "T": (5, 10, 50), "w_bar": 1.0}
LEMMA3_GRID = {"a": (0.0, 0.5, -0.5, 0.9), "T": (10, 100), "w_bar": 1.0}
ENVELOPE_GRID = {"a": (0.5, -0.5, 0.9), "T": 1000, "w_bar": 1.0}


def check_tv(reps=100_000, seed=0, workers=1) -> list[CheckResult]:
    g = TV_GRID
    model = make_noise_model(NoiseKind.UNIFORM, g["w_bar"])
    out = []
    for eps in g["eps"]:
        for T in g["T"]:
            a1, a2 = g["mu"] + eps, g["mu"] - eps
            est = empirical_tv_uniform(a1, a2, g["w_bar"], T, reps, seed, workers)
            bound = lemma1_tv_upper_bound(g["mu"], eps, g["w_bar"], model.c_w_bar, T).value
            margin = bound + 3 * est.std_error - est.estimate
            out.append(CheckResult("tv", f"eps={eps} T={T}", margin >= 0, margin,
                                   f"tv={est.estimate:.5f}+-{est.std_error:.5f} bound={bound:.5f}"))
    return out


def check_lemma3(reps=10_000, seed=0, workers=1) -> list[CheckResult]:
    g = LEMMA3_GRID
    model = make_noise_model(NoiseKind.UNIFORM, g["w_bar"])
    out = []
    for a in g["a"]:
        for T in g["T"]:
            emp, bound = lemma3_mc_check(a, model, T, reps, seed, workers)
            out.append(CheckResult("lemma3", f"a={a} T={T}", emp <= bound, bound - emp,
                                   f"empirical={emp:.6g} bound={bound:.6g}"))
    return out


def check_envelope(reps=1000, seed=0, workers=1) -> list[CheckResult]:
    g = ENVELOPE_GRID
    model = make_noise_model(NoiseKind.UNIFORM, g["w_bar"])
    out = []
    for a in g["a"]:
        top = envelope_max_state(a, model, g["T"], reps, seed, workers)
        bound = state_envelope_bound(a, g["w_bar"])
        out.append(CheckResult("envelope", f"a={a} T={g['T']}", top < bound, bound - top,
                               f"max|x|={top:.6g} bound={bound:.6g}"))
    return out


SUITES = {"tv": check_tv, "lemma3": check_lemma3, "envelope": check_envelope}
