"""Bounded noise models, seeded random streams, stable systems and the simulator.

Boundary constant ``c_w_bar``
-----------------------------
Noise must satisfy ``P(w >= w_bar - eps) <= c_w_bar * eps`` for every
``eps`` in ``[0, w_bar]`` (and the mirrored lower tail). For a symmetric
density that is non-increasing on ``[0, w_bar]`` the mass of the strip
``[w_bar - eps, w_bar]`` divided by ``eps`` is the average density over the
strip, which grows as the strip widens inward. Its supremum is reached at
``eps = w_bar`` where it equals ``P(0 <= w <= w_bar) / w_bar = 1 / (2 w_bar)``.
That value is therefore the tightest valid constant for both the uniform law
and the truncated Gaussian. The boundary density of the truncated Gaussian
is only the ``eps -> 0`` limit of the ratio and is exposed as
``boundary_density`` for reference.
"""

from __future__ import annotations

import csv
import math
import zlib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import InvalidParam, UnstableSystem
from .numerics import spectral_radius
from .numerics.linalg import as_matrix


class NoiseKind(str, Enum):
    UNIFORM = "uniform"
    TGAUSS = "tgauss"

    @classmethod
    def parse(cls, value) -> "NoiseKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        aliases = {"uniform": cls.UNIFORM, "tgauss": cls.TGAUSS,
                   "truncatedgaussian": cls.TGAUSS, "truncatednormal": cls.TGAUSS}
        if key not in aliases:
            raise InvalidParam(f"unknown noise kind {value!r} (use 'uniform' or 'tgauss')")
        return aliases[key]


def _phi(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _Phi(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


@dataclass(frozen=True)
class NoiseModel:
    kind: NoiseKind
    w_bar: float
    sigma: float | None
    sigma_w_sq: float
    c_w_bar: float

    @property
    def boundary_density(self) -> float:
        if self.kind is NoiseKind.UNIFORM:
            return 1.0 / (2.0 * self.w_bar)
        alpha = self.w_bar / self.sigma
        return _phi(alpha) / (self.sigma * (2.0 * _Phi(alpha) - 1.0))

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "w_bar": self.w_bar, "sigma": self.sigma,
                "sigma_w_sq": self.sigma_w_sq, "c_w_bar": self.c_w_bar}


def make_noise_model(kind, w_bar: float, sigma: float | None = None) -> NoiseModel:
    kind = NoiseKind.parse(kind)
    if not (w_bar > 0 and math.isfinite(w_bar)):
        raise InvalidParam(f"w_bar must be positive and finite, got {w_bar}")
    c_w_bar = 1.0 / (2.0 * w_bar)
    if kind is NoiseKind.UNIFORM:
        return NoiseModel(kind, float(w_bar), None, w_bar ** 2 / 3.0, c_w_bar)
    if sigma is None or not (sigma > 0 and math.isfinite(sigma)):
        raise InvalidParam(f"truncated Gaussian needs sigma > 0, got {sigma}")
    alpha = w_bar / sigma
    if alpha < 0.1:
        raise InvalidParam(f"w_bar/sigma = {alpha:.3g} < 0.1 makes rejection sampling too slow")
    mass = 2.0 * _Phi(alpha) - 1.0
    var = sigma ** 2 * (1.0 - 2.0 * alpha * _phi(alpha) / mass)
    return NoiseModel(kind, float(w_bar), float(sigma), var, c_w_bar)


# -- random streams -----------------------------------------------------------

def _key_int(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise InvalidParam(f"stream key parts must be non-negative, got {part}")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def make_rng(seed: int, *key) -> np.random.Generator:
    """Counter-based (Philox) generator for the substream ``(seed, *key)``.

    Key parts may be non-negative ints or strings (hashed with CRC32), e.g.
    ``make_rng(seed, trial, "noise")``. Streams with different keys are
    statistically independent; equal keys give identical sequences on every
    platform.
    """
    entropy = int(seed) % (1 << 64)
    ss = np.random.SeedSequence(entropy, spawn_key=tuple(_key_int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def sample_noise(model: NoiseModel, n: int, rng: np.random.Generator, size: int | None = None):
    """Draw ``n`` i.i.d. coordinates (``size`` rows of them if given).

    Truncated Gaussian draws filter a normal stream in order, so a longer
    request starts with exactly the values a shorter one would return.
    """
    shape = (n,) if size is None else (size, n)
    count = int(np.prod(shape))
    w = model.w_bar
    if model.kind is NoiseKind.UNIFORM:
        return rng.uniform(-w, w, size=shape)
    out = np.empty(count)
    filled = 0
    accept = 2.0 * _Phi(w / model.sigma) - 1.0
    while filled < count:
        need = count - filled
        batch = int(need / accept * 1.1) + 16
        z = rng.standard_normal(batch) * model.sigma
        z = z[np.abs(z) <= w][:need]
        out[filled:filled + z.size] = z
        filled += z.size
    return out.reshape(shape)


# -- systems and trajectories -------------------------------------------------

@dataclass(frozen=True)
class SystemMatrix:
    A: np.ndarray
    rho: float

    @classmethod
    def from_array(cls, A) -> "SystemMatrix":
        A = as_matrix(A, "A")
        if A.shape[0] != A.shape[1]:
            raise InvalidParam(f"A must be square, got {A.shape}")
        return cls(A, spectral_radius(A, strict=False))

    @property
    def n(self) -> int:
        return self.A.shape[0]


def random_system(n: int, entry_low: float, entry_high: float, target_rho: float,
                  rng: np.random.Generator) -> SystemMatrix:
    """i.i.d. uniform entries, rescaled so the spectral radius equals ``target_rho``."""
    if n < 1:
        raise InvalidParam(f"n must be >= 1, got {n}")
    if entry_low > entry_high:
        raise InvalidParam(f"entry_low {entry_low} > entry_high {entry_high}")
    if not 0.0 < target_rho < 1.0:
        raise InvalidParam(f"target_rho must lie in (0, 1), got {target_rho}")
    for _ in range(1000):
        M = rng.uniform(entry_low, entry_high, size=(n, n))
        rho = spectral_radius(M, strict=False)
        if rho >= 1e-8:
            A = M * (target_rho / rho)
            return SystemMatrix(A, spectral_radius(A, strict=False))
    raise InvalidParam("could not draw a matrix with non-zero spectral radius")


@dataclass(frozen=True)
class Trajectory:
    """States ``x_0 .. x_T`` stacked as rows; ``x_0 = 0``."""

    states: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.states, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[0] < 2:
            raise InvalidParam("a trajectory needs at least the states x_0 and x_1")
        if np.any(X[0] != 0.0):
            raise InvalidParam("trajectories must start at x_0 = 0")
        if not np.all(np.isfinite(X)):
            raise InvalidParam("trajectory has non-finite states")
        object.__setattr__(self, "states", X)

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def T(self) -> int:
        return self.states.shape[0] - 1

    def prefix(self, T: int) -> "Trajectory":
        if not 1 <= T <= self.T:
            raise InvalidParam(f"prefix length {T} outside [1, {self.T}]")
        return Trajectory(self.states[:T + 1])


def rollout(A, noise) -> np.ndarray:
    """x_0 = 0, x_{t+1} = A x_t + w_t for the given noise rows w_0..w_{T-1}."""
    A = as_matrix(A, "A")
    W = np.asarray(noise, dtype=float).reshape(-1, A.shape[0])
    X = np.zeros((W.shape[0] + 1, A.shape[0]))
    for t in range(W.shape[0]):
        X[t + 1] = A @ X[t] + W[t]
    return X


def simulate(sys: SystemMatrix, model: NoiseModel, T: int, rng: np.random.Generator,
             return_noise: bool = False):
    if sys.rho >= 1.0:
        raise UnstableSystem(f"spectral radius {sys.rho:.6g} >= 1")
    if T < 1:
        raise InvalidParam(f"T must be >= 1, got {T}")
    W = sample_noise(model, sys.n, rng, size=T)
    traj = Trajectory(rollout(sys.A, W))
    return (traj, W) if return_noise else traj


def write_trajectory_csv(traj: Trajectory, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t"] + [f"x{i + 1}" for i in range(traj.n)])
        for t, x in enumerate(traj.states):
            wr.writerow([t] + [format(v, ".17g") for v in x])


def read_trajectory_csv(path) -> Trajectory:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["t"]:
        raise InvalidParam(f"{path}: expected header 't,x1,...,xn'")
    n = len(rows[0]) - 1
    data = []
    for k, row in enumerate(rows[1:]):
        if len(row) != n + 1:
            raise InvalidParam(f"{path}: row {k + 2} has {len(row)} fields, expected {n + 1}")
        if int(row[0]) != k:
            raise InvalidParam(f"{path}: row {k + 2} has t={row[0]}, expected {k}")
        data.append([float(v) for v in row[1:]])
    return Trajectory(np.array(data))


def simulate_scalar_batch(a: float, model: NoiseModel, T: int, reps: int,
                          rng: np.random.Generator) -> np.ndarray:
    """``reps`` independent scalar trajectories as a ``(reps, T + 1)`` array."""
    if not abs(a) < 1.0:
        raise UnstableSystem(f"|a| = {abs(a)} >= 1")
    W = sample_noise(model, T, rng, size=reps)
    X = np.zeros((reps, T + 1))
    for t in range(T):
        X[:, t + 1] = a * X[:, t] + W[:, t]
    return X
