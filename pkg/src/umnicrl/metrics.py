"""Alignment of estimated to true latents, mixing ratios and graph scores."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.optimize import linear_sum_assignment

from .graph import Dag, shd, transitive_closure

MIXING_THRESHOLD = 0.1

METRIC_COLUMNS = ("shd", "mixing_ratio", "alignment")


class AlignmentError(ValueError):
    pass


def row_sup_normalize(mixing: np.ndarray) -> np.ndarray:
    m = np.abs(np.asarray(mixing, dtype=float))
    sup = m.max(axis=1, keepdims=True)
    if np.any(sup == 0.0):
        raise AlignmentError("mixing matrix has a zero row")
    return m / sup


def align_permutation(mixing: np.ndarray, method: Literal["assignment", "greedy"] = "assignment") -> np.ndarray:
    """Permutation ``perm`` with estimated latent ``i`` matched to true latent ``perm[i]``.

    ``assignment`` maximizes the product of the matched normalized magnitudes,
    which stays correct when rows carry large ancestor entries. ``greedy``
    takes entries in decreasing magnitude, skipping used rows and columns.
    """
    m = np.asarray(mixing, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise AlignmentError(f"mixing must be square, got {m.shape}")
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[-1] <= 1e-12 * s[0]:
        raise AlignmentError("mixing matrix is rank deficient")
    a = row_sup_normalize(m)
    n = a.shape[0]
    if method == "assignment":
        with np.errstate(divide="ignore"):
            cost = -np.log(a)
        cost[~np.isfinite(cost)] = 1e6
        rows, cols = linear_sum_assignment(cost)
        perm = np.empty(n, dtype=np.int64)
        perm[rows] = cols
        return perm
    if method != "greedy":
        raise ValueError(f"unknown alignment method {method!r}")
    perm = np.full(n, -1, dtype=np.int64)
    used_c: set[int] = set()
    for flat in np.argsort(-a, axis=None, kind="stable"):
        i, j = divmod(int(flat), n)
        if perm[i] < 0 and j not in used_c:
            perm[i] = j
            used_c.add(j)
    return perm


def aligned(mixing: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """Reorder rows so that row ``k`` is the estimate matched to true latent ``k``."""
    inv = np.argsort(perm)
    return np.asarray(mixing)[inv]


def mixing_ratio_hard(mixing: np.ndarray, threshold: float = MIXING_THRESHOLD, normalize: bool = True) -> float:
    m = row_sup_normalize(mixing) if normalize else np.abs(mixing)
    n = m.shape[0]
    if n == 1:
        return 0.0
    off = m[~np.eye(n, dtype=bool)]
    return float(np.sum(off >= threshold) / (n * n - n))


def mixing_ratio_soft(
    mixing: np.ndarray,
    true_dag: Dag,
    threshold: float = MIXING_THRESHOLD,
    normalize: bool = True,
) -> float:
    """Fraction of entries outside the ancestor-or-self pattern at or above ``threshold``.

    ``mixing`` must already be aligned to ``true_dag``'s labels. Returns NaN
    when every entry is an ancestor-or-self entry.
    """
    m = row_sup_normalize(mixing) if normalize else np.abs(mixing)
    n = m.shape[0]
    allowed = np.eye(n, dtype=bool)
    for i in range(n):
        for j in true_dag.ancestors(i):
            allowed[i, j] = True
    denom = n * n - int(allowed.sum())
    if denom == 0:
        return float("nan")
    return float(np.sum(m[~allowed] >= threshold) / denom)


@dataclass(frozen=True)
class EvaluationReport:
    shd_value: int
    mixing_ratio: float
    alignment: tuple[int, ...]
    mixing: np.ndarray
    kind: str

    def to_row(self) -> dict:
        return {
            "shd": self.shd_value,
            "mixing_ratio": self.mixing_ratio,
            "alignment": " ".join(map(str, self.alignment)),
        }


def evaluate(
    g_hat: Dag,
    mixing: np.ndarray,
    true_dag: Dag,
    kind: Literal["soft", "hard"],
    threshold: float = MIXING_THRESHOLD,
    normalize: bool = True,
    method: Literal["assignment", "greedy"] = "assignment",
) -> EvaluationReport:
    """Score an estimate against the truth.

    ``mixing`` is ``H* @ G``: row ``i`` expresses estimated latent ``i`` in true latents.
    """
    if g_hat.n != true_dag.n or np.shape(mixing) != (true_dag.n, true_dag.n):
        raise ValueError("inconsistent dimensions")
    perm = align_permutation(mixing, method)
    g_rel = g_hat.relabel(perm)
    m = aligned(mixing, perm)
    if kind == "soft":
        dist = shd(g_rel, transitive_closure(true_dag))
        ratio = mixing_ratio_soft(m, true_dag, threshold, normalize)
    else:
        dist = shd(g_rel, true_dag)
        ratio = mixing_ratio_hard(m, threshold, normalize)
    norm = row_sup_normalize(m) if normalize else np.abs(m)
    return EvaluationReport(int(dist), ratio, tuple(int(p) for p in perm), norm, kind)
