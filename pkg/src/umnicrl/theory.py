"""Integer lattice utilities, kappa bounds, a two-node non-identifiable pair and a regularity check."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from math import floor, isqrt
from pathlib import Path
from typing import Sequence

import numpy as np

from .graph import Dag
from .scm import (
    EnvironmentSpec,
    LinearGaussianSem,
    ObservationModel,
    analytic_latent_covariance,
    model_to_dict,
)
from .score import lambda_matrix

#: max |det| over {0,1}^{m x m}, m = 1..6 (index m - 1)
_MAX_BINARY_DET = (1, 1, 2, 3, 5, 9)

DEFAULT_C_GRID = (-3, -2, -1, Fraction(-1, 2), Fraction(1, 2), 1, 2, 3)


class InfeasibleError(ValueError):
    pass


class ConstructionError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# exact determinants


def _as_int_rows(a) -> list[list[int]]:
    arr = np.asarray(a)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    if arr.dtype.kind == "f" and not np.all(arr == np.round(arr)):
        raise ValueError("matrix has non-integer entries")
    return [[int(v) for v in row] for row in arr.tolist()]


def _laplace(m: list[list[int]]) -> int:
    n = len(m)
    if n == 0:
        return 1
    if n == 1:
        return m[0][0]
    if n == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    total = 0
    for j, v in enumerate(m[0]):
        if v:
            minor = [row[:j] + row[j + 1 :] for row in m[1:]]
            total += (-1) ** j * v * _laplace(minor)
    return total


def _bareiss(m: list[list[int]]) -> int:
    m = [row[:] for row in m]
    n = len(m)
    sign, prev = 1, 1
    for k in range(n - 1):
        if m[k][k] == 0:
            swap = next((r for r in range(k + 1, n) if m[r][k] != 0), None)
            if swap is None:
                return 0
            m[k], m[swap] = m[swap], m[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1] if n else 1


def _det(m: list[list[int]]) -> int:
    return _laplace(m) if len(m) <= 8 else _bareiss(m)


def int_det(a) -> int:
    """Exact determinant of an integer matrix (cofactor expansion up to 8x8, Bareiss above)."""
    return _det(_as_int_rows(a))


def adjugate_vector(d, i: int) -> np.ndarray:
    """Integer ``w`` with ``d @ w == det(d) * e_i``: row ``i`` of the cofactor matrix."""
    m = _as_int_rows(d)
    n = len(m)
    if not 0 <= i < n:
        raise IndexError(f"index {i} out of range for a {n}x{n} matrix")
    if _det(m) == 0:
        raise ValueError("matrix is singular")
    rows = m[:i] + m[i + 1 :]
    w = [(-1) ** (i + j) * _det([r[:j] + r[j + 1 :] for r in rows]) for j in range(n)]
    return np.array(w, dtype=np.int64)


# ---------------------------------------------------------------------------
# kappa


def kappa_bound(n: int) -> int:
    """Bound on the max |det| of a binary ``(n-1) x (n-1)`` matrix.

    Exact values for ``n <= 7``; beyond, the Hadamard bound for 0/1 matrices
    ``(m+1)^((m+1)/2) / 2^m`` with ``m = n - 1``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    m = n - 1
    if m <= len(_MAX_BINARY_DET):
        return 1 if m == 0 else _MAX_BINARY_DET[m - 1]
    # integer floor of sqrt((m+1)^(m+1)) / 2^m
    return isqrt((m + 1) ** (m + 1) // 4**m)


def kappa_bound_sparse(n: int, k: int) -> int:
    """``floor(2^(k/3))`` where ``k`` counts nonzeros of the signature beyond ``n``."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    return max(1, floor(2 ** (k / 3)))


def max_binary_det(m: int) -> int:
    """Brute-force max |det| over {0,1}^{m x m}.

    Full enumeration for ``m <= 4``; otherwise over sets of distinct nonzero
    rows (repeated or zero rows give determinant zero, row order only flips sign).
    """
    if m < 1:
        raise ValueError("m must be positive")
    if m <= 4:
        mats = (
            (np.arange(2 ** (m * m))[:, None] >> np.arange(m * m)) & 1
        ).reshape(-1, m, m).astype(float)
        return int(round(np.abs(np.linalg.det(mats)).max()))
    rows = ((np.arange(1, 2**m)[:, None] >> np.arange(m)) & 1).astype(float)
    best = 0.0
    combos = itertools.combinations(range(rows.shape[0]), m)
    chunk = 200_000
    while True:
        idx = np.array(list(itertools.islice(combos, chunk)))
        if idx.size == 0:
            break
        best = max(best, float(np.abs(np.linalg.det(rows[idx])).max()))
    return int(round(best))


# ---------------------------------------------------------------------------
# two-node non-identifiable pair


@dataclass(frozen=True)
class CounterexamplePair:
    """Two latent models that produce the same observed laws in both environments.

    Model A has ``0 -> 1`` with unit weight and identity transform; model B has
    no edges and transform ``[[a, b], [c, d]]``. Environment 1 hard-intervenes
    node 0, environment 2 node 1.
    """

    vbar: tuple[float, float, float, float]
    v: tuple[float, float, float, float]
    abcd: tuple[float, float, float, float]

    @property
    def model_a(self) -> tuple[LinearGaussianSem, list[EnvironmentSpec], ObservationModel]:
        v1, v1s, v2, v2s = self.v
        sem = LinearGaussianSem(Dag(2, frozenset({(0, 1)})), np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([v1, v2]))
        return sem, _hard_pair(v1s, v2s), ObservationModel(np.eye(2))

    @property
    def model_b(self) -> tuple[LinearGaussianSem, list[EnvironmentSpec], ObservationModel]:
        vb1, vb1s, vb2, vb2s = self.vbar
        a, b, c, d = self.abcd
        sem = LinearGaussianSem(Dag.empty(2), np.zeros((2, 2)), np.array([vb1, vb2]))
        return sem, _hard_pair(vb1s, vb2s), ObservationModel(np.array([[a, b], [c, d]]))

    def observed_covariances(self, which: str) -> list[np.ndarray]:
        sem, specs, model = self.model_a if which == "a" else self.model_b
        g = model.transform
        return [g @ analytic_latent_covariance(sem, s) @ g.T for s in specs]

    def to_dict(self) -> dict:
        return {
            "vbar": list(self.vbar),
            "v": list(self.v),
            "abcd": list(self.abcd),
            "model_a": model_to_dict(*self.model_a),
            "model_b": model_to_dict(*self.model_b),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def _hard_pair(var0: float, var1: float) -> list[EnvironmentSpec]:
    return [
        EnvironmentSpec(frozenset({0}), "hard", {0: np.zeros(2)}, {0: float(var0)}),
        EnvironmentSpec(frozenset({1}), "hard", {1: np.zeros(2)}, {1: float(var1)}),
    ]


def counterexample_residuals(pair: CounterexamplePair) -> np.ndarray:
    """The six matching conditions, each as ``lhs - rhs``."""
    v1, v1s, v2, v2s = pair.v
    vb1, vb1s, vb2, vb2s = pair.vbar
    a, b, c, d = pair.abcd
    return np.array([
        v1s - (a * a * vb1s + b * b * vb2),
        v1s - (a * c * vb1s + b * d * vb2),
        v2 - ((c * c - a * c) * vb1s + (d * d - b * d) * vb2),
        v1 - (a * a * vb1 + b * b * vb2s),
        v2s - (c * c * vb1 + d * d * vb2s),
        a * c * vb1 + b * d * vb2s,
    ])


def build_counterexample(vbar: Sequence[float]) -> CounterexamplePair:
    """Construct the pair for model-B variances ``vbar = (V1, V1*, V2, V2*)``."""
    vb1, vb1s, vb2, vb2s = (float(x) for x in vbar)
    if min(vb1, vb1s, vb2, vb2s) <= 0:
        raise ValueError("variances must be positive")
    if vb1 == vb1s or vb2 == vb2s:
        raise ValueError("interventional variances must differ from observational ones")
    ratio = vb1s * vb2s / (vb1 * vb2)
    if np.isclose(ratio, 1.0, rtol=0.0, atol=1e-12):
        raise InfeasibleError("V1 * V2 equals V1* * V2*; no real solution exists")
    a2 = 0.5 * vb2 / (4 * vb1s) * (1 - ratio) ** 2
    a = np.sqrt(a2)
    d = 1.0
    lin = vb2 - vb2s * vb1s / vb1
    disc = np.sqrt(lin * lin - 4 * vb2 * a2 * vb1s)
    roots = sorted([(lin + disc) / (2 * vb2), (lin - disc) / (2 * vb2)], key=abs, reverse=True)
    for b in roots:
        c = -b * vb2s / (vb1 * a)
        v1s = a2 * vb1s + b * b * vb2
        v2 = (c * c - a * c) * vb1s + (d * d - b * d) * vb2
        v1 = a2 * vb1 + b * b * vb2s
        v2s = c * c * vb1 + d * d * vb2s
        if v2 > 0 and b != 0:
            pair = CounterexamplePair((vb1, vb1s, vb2, vb2s), (v1, v1s, v2, v2s), (a, b, c, d))
            break
    else:
        raise ConstructionError("no root of the quadratic gives a positive V2 in the V2 condition")
    if np.max(np.abs(counterexample_residuals(pair))) > 1e-9 * max(1.0, v1, v1s, v2, v2s):
        raise ConstructionError("matching conditions not met after back-substitution")
    return pair


# ---------------------------------------------------------------------------
# regularity


@dataclass(frozen=True)
class RegularityFlag:
    node: int
    parent: int
    c: Fraction
    mean: float
    std: float


def regularity_diagnostic(
    sem: LinearGaussianSem,
    specs: Sequence[EnvironmentSpec],
    probe_z: np.ndarray,
    c_grid: Sequence = DEFAULT_C_GRID,
    tol: float = 1e-3,
) -> list[RegularityFlag]:
    """Flag ``(i, j in pa(i), c)`` whose Lambda ratio looks constant over the probes.

    The ratio is ``(L[j, i] + c L[j, j]) / L[i, i]``; constancy is declared when
    its coefficient of variation is below ``tol``. A heuristic, not a proof.
    """
    probe_z = np.atleast_2d(probe_z)
    lams = np.stack([lambda_matrix(sem, specs, z) for z in probe_z])
    flags: list[RegularityFlag] = []
    for i in range(sem.n):
        for j in sorted(sem.dag.parents(i)):
            diag = lams[:, i, i]
            keep = np.abs(diag) >= tol
            if keep.sum() < 2:
                continue
            for c in c_grid:
                r = (lams[keep, j, i] + float(c) * lams[keep, j, j]) / diag[keep]
                mean, std = float(r.mean()), float(r.std())
                if std == 0.0 or std <= tol * abs(mean):
                    flags.append(RegularityFlag(i, j, Fraction(c), mean, std))
    return flags
