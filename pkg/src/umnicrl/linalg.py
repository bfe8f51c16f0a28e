"""Small SVD helpers shared by the score and recovery code."""

from __future__ import annotations

import numpy as np


def numerical_rank(a: np.ndarray, rtol: float) -> int:
    """Number of singular values at least ``rtol`` times the largest."""
    a = np.atleast_2d(a)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s >= rtol * s[0]))


def truncated_pinv(a: np.ndarray, rtol: float) -> np.ndarray:
    """Pseudo-inverse of a symmetric PSD matrix, dropping eigenvalues below ``rtol * max``."""
    a = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(a)
    top = np.max(np.abs(w)) if w.size else 0.0
    keep = w > rtol * top
    return (v[:, keep] / w[keep]) @ v[:, keep].T


def orthonormal_rows(rows: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Orthonormal basis (as rows) of the span of ``rows``."""
    rows = np.atleast_2d(rows)
    if rows.shape[0] == 0:
        return rows.reshape(0, rows.shape[1])
    u, s, vt = np.linalg.svd(rows, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((0, rows.shape[1]))
    return vt[s >= rtol * s[0]]


def complement_projector(rows: np.ndarray, dim: int) -> np.ndarray:
    """Orthogonal projector onto the null space of the matrix with the given rows."""
    basis = orthonormal_rows(np.reshape(rows, (-1, dim)))
    return np.eye(dim) - basis.T @ basis


def column_basis(a: np.ndarray, rtol: float) -> np.ndarray:
    """Orthonormal columns spanning the range of ``a`` at relative tolerance ``rtol``."""
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((a.shape[0], 0))
    return u[:, s >= rtol * s[0]]
