"""Integer search box ``{-kappa..kappa}^n`` in canonical order."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class SearchBox:
    kappa: int
    n: int

    def __post_init__(self) -> None:
        if self.kappa < 1 or self.n < 1:
            raise ValueError(f"need kappa >= 1 and n >= 1, got {self.kappa}, {self.n}")

    @property
    def size(self) -> int:
        return (2 * self.kappa + 1) ** self.n

    def points(self) -> np.ndarray:
        """Every lattice point once, ascending l1 norm then lexicographic. Read-only."""
        return _points(self.kappa, self.n)


@lru_cache(maxsize=32)
def _points(kappa: int, n: int) -> np.ndarray:
    pts = np.array(list(itertools.product(range(-kappa, kappa + 1), repeat=n)), dtype=np.int64)
    # product() is lexicographic; a stable sort on l1 keeps that as tie-break
    pts = pts[np.argsort(np.abs(pts).sum(axis=1), kind="stable")]
    pts.setflags(write=False)
    return pts


def pair_candidates(w_t: np.ndarray, w_j: np.ndarray, bound: int) -> tuple[np.ndarray, np.ndarray]:
    """``alpha * w_t + beta * w_j`` for beta in 1..bound (outer), alpha in 0, -1, 1, -2, 2, ...

    Returns the candidate vectors and the matching ``(alpha, beta)`` pairs.
    """
    alphas = [0] + [s * a for a in range(1, bound + 1) for s in (-1, 1)]
    pairs = np.array([(a, b) for b in range(1, bound + 1) for a in alphas], dtype=np.int64)
    cands = pairs[:, :1] * np.asarray(w_t)[None, :] + pairs[:, 1:] * np.asarray(w_j)[None, :]
    return cands, pairs
