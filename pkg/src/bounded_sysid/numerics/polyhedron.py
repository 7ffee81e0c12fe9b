from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..errors import InvalidParam

NORMAL_EPS = 1e-12


@dataclass(frozen=True)
class Polyhedron:
    """The set ``{a : G a <= h}``; emptiness is detected by the solvers, never assumed."""

    G: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        h = np.asarray(self.h, dtype=float).ravel()
        if G.shape[0] != h.shape[0]:
            raise InvalidParam(f"G has {G.shape[0]} rows but h has {h.shape[0]} entries")
        if G.shape[0] < 1:
            raise InvalidParam("polyhedron needs at least one constraint")
        if not (np.all(np.isfinite(G)) and np.all(np.isfinite(h))):
            raise InvalidParam("polyhedron data must be finite")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", h)

    @property
    def dim(self) -> int:
        return self.G.shape[1]

    @property
    def m(self) -> int:
        return self.G.shape[0]

    @cached_property
    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.G, axis=1)

    def violation(self, a) -> np.ndarray:
        return self.G @ np.asarray(a, dtype=float) - self.h

    def contains(self, a, tol: float = 1e-9) -> bool:
        return bool(np.all(self.violation(a) <= tol))

    def drop_null_normals(self, eps: float = NORMAL_EPS) -> "Polyhedron":
        """Remove rows whose normal has norm < eps.

        Such a row is either vacuous (h >= 0) or makes the set empty; the
        latter is kept as a single ``0 . a <= h`` row so emptiness survives.
        """
        norms = np.linalg.norm(self.G, axis=1)
        keep = norms >= eps
        if keep.all():
            return self
        bad = (~keep) & (self.h < 0)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            keep[i] = True
        if not keep.any():
            # every normal vanished and all rows are vacuous: whole space
            keep[0] = True
        return Polyhedron(self.G[keep], self.h[keep])
