"""Gaussian score functions, score differences and basis selection.

Every score here is affine, ``x -> coeff @ x + offset``. For a zero-mean
Gaussian the score is ``-precision @ x``; on a degenerate support the
precision is the truncated pseudo-inverse of the covariance.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .linalg import numerical_rank, truncated_pinv
from .scm import (
    EnvironmentSpec,
    LinearGaussianSem,
    ObservationModel,
    analytic_latent_covariance,
    analytic_latent_mean,
    analytic_latent_precision,
    environment_parameters,
)

#: relative singular-value cutoff for pseudo-inverting sample covariances
ESTIMATED_PINV_RTOL = 1e-9
ANALYTIC_PINV_RTOL = 1e-8


class IdentifiabilityInputError(RuntimeError):
    """Fewer linearly independent score differences than latent dimensions."""


@dataclass(frozen=True, eq=False)
class AffineScoreFn:
    coeff: np.ndarray
    offset: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.coeff, dtype=float)
        b = np.array(self.offset, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or b.shape != (m.shape[0],):
            raise ValueError(f"incompatible shapes {m.shape}, {b.shape}")
        object.__setattr__(self, "coeff", m)
        object.__setattr__(self, "offset", b)

    @property
    def dim(self) -> int:
        return self.coeff.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at one point ``(d,)`` or row-stacked points ``(k, d)``."""
        x = np.asarray(x, dtype=float)
        return x @ self.coeff.T + self.offset

    def __sub__(self, other: AffineScoreFn) -> AffineScoreFn:
        return score_difference(self, other)


@dataclass(frozen=True, eq=False)
class ScoreDifferenceStack:
    """Basis score differences; evaluation at ``x`` is the ``d x n`` matrix."""

    diffs: tuple[AffineScoreFn, ...]

    @property
    def n(self) -> int:
        return len(self.diffs)

    @property
    def d(self) -> int:
        return self.diffs[0].dim

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.stack([f(x) for f in self.diffs], axis=-1)

    def evaluate(self, probes: np.ndarray) -> np.ndarray:
        """Array ``(n, d, p)`` with ``[m, :, k]`` the ``m``-th difference at probe ``k``."""
        probes = np.atleast_2d(probes)
        return np.stack([f(probes).T for f in self.diffs])

    def coefficients(self) -> np.ndarray:
        return np.stack([f.coeff for f in self.diffs])


def estimate_gaussian_score(x: np.ndarray, rtol: float = ESTIMATED_PINV_RTOL) -> AffineScoreFn:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] < 2:
        raise ValueError("need at least two samples")
    mean = x.mean(axis=0)
    cov = np.cov(x, rowvar=False).reshape(x.shape[1], x.shape[1])
    return score_from_moments(cov, mean, rtol)


def score_from_moments(cov: np.ndarray, mean: np.ndarray, rtol: float) -> AffineScoreFn:
    coeff = -truncated_pinv(cov, rtol)
    coeff = 0.5 * (coeff + coeff.T)
    return AffineScoreFn(coeff, -coeff @ mean)


def score_difference(interventional: AffineScoreFn, observational: AffineScoreFn) -> AffineScoreFn:
    if interventional.dim != observational.dim:
        raise ValueError("score functions live in different dimensions")
    return AffineScoreFn(
        interventional.coeff - observational.coeff,
        interventional.offset - observational.offset,
    )


def select_basis(
    diffs: Sequence[AffineScoreFn],
    probes: np.ndarray,
    tol: float,
    n: int | None = None,
) -> tuple[list[int], ScoreDifferenceStack]:
    """Greedily admit score differences whose probe evaluations raise the rank.

    ``n`` defaults to the numerical rank of the probe points, i.e. the
    dimension of the data support.
    """
    probes = np.atleast_2d(probes)
    if n is None:
        n = numerical_rank(probes, ANALYTIC_PINV_RTOL)
    admitted: list[int] = []
    rows: list[np.ndarray] = []
    for m, f in enumerate(diffs):
        cand = f(probes).ravel()
        trial = np.vstack(rows + [cand])
        if numerical_rank(trial, tol) > len(rows):
            admitted.append(m)
            rows.append(cand)
            if len(admitted) == n:
                break
    if len(admitted) < n:
        raise IdentifiabilityInputError(
            f"only {len(admitted)} of {n} independent score differences found"
        )
    return admitted, ScoreDifferenceStack(tuple(diffs[m] for m in admitted))


# ---------------------------------------------------------------------------
# ground truth


def analytic_latent_score(sem: LinearGaussianSem, spec: EnvironmentSpec) -> AffineScoreFn:
    theta = analytic_latent_precision(sem, spec)
    mu = analytic_latent_mean(sem, spec)
    return AffineScoreFn(-theta, theta @ mu)


def analytic_observed_score(
    sem: LinearGaussianSem, spec: EnvironmentSpec, model: ObservationModel
) -> AffineScoreFn:
    """Score of ``X = G Z`` on its support, from the pushed-forward covariance."""
    g = model.transform
    cov = g @ analytic_latent_covariance(sem, spec) @ g.T
    return score_from_moments(cov, g @ analytic_latent_mean(sem, spec), ANALYTIC_PINV_RTOL)


def _log_ratio_grad(sem: LinearGaussianSem, spec: EnvironmentSpec, j: int, z: np.ndarray) -> np.ndarray:
    # gradient of log q_j(z_j | z_pa) - log p_j(z_j | z_pa), Gaussian mechanisms
    b_obs = -sem.weights[j].copy()
    b_obs[j] += 1.0
    a, v, mu = environment_parameters(sem, spec)
    b_int = -a[j].copy()
    b_int[j] += 1.0
    return -b_int * (b_int @ z - mu[j]) / v[j] + b_obs * (b_obs @ z) / sem.noise_vars[j]


def lambda_oracle(sem: LinearGaussianSem, spec: EnvironmentSpec, z: np.ndarray) -> np.ndarray:
    """Per-environment Lambda summand at latent point ``z``.

    Column ``j`` is the gradient of the log ratio of the interventional to the
    observational mechanism of node ``j`` when ``j`` is a target, zero
    otherwise; row support of column ``j`` is ``pa(j) | {j}``.
    """
    if spec.kind == "observational":
        raise ValueError("Lambda is defined for interventional environments")
    z = np.asarray(z, dtype=float)
    lam = np.zeros((sem.n, sem.n))
    for j in spec.targets:
        lam[:, j] = _log_ratio_grad(sem, spec, j, z)
    return lam


def lambda_matrix(
    sem: LinearGaussianSem, specs: Sequence[EnvironmentSpec], z: np.ndarray
) -> np.ndarray:
    """Node-level Lambda: column ``j`` uses the mechanism of the first spec targeting ``j``.

    Nodes never targeted get a zero column.
    """
    lam = np.zeros((sem.n, sem.n))
    done: set[int] = set()
    for spec in specs:
        for j in spec.targets - done:
            lam[:, j] = _log_ratio_grad(sem, spec, j, np.asarray(z, dtype=float))
            done.add(j)
    return lam


def verify_score_transform(
    sem: LinearGaussianSem,
    spec: EnvironmentSpec,
    model: ObservationModel,
    probe_z: np.ndarray,
    tol: float = 1e-8,
    observed_score: AffineScoreFn | None = None,
) -> bool:
    """Check ``s_X(G z) == pinv(G).T @ s_Z(z)`` at every probe.

    ``observed_score`` defaults to the analytic score of ``X`` under ``model``;
    pass another one to test it against ``model``'s transform.
    """
    probe_z = np.atleast_2d(probe_z)
    s_x = observed_score if observed_score is not None else analytic_observed_score(sem, spec, model)
    s_z = analytic_latent_score(sem, spec)
    lhs = s_x(probe_z @ model.transform.T)
    rhs = s_z(probe_z) @ model.pinv
    scale = max(1.0, float(np.max(np.abs(rhs))))
    return bool(np.max(np.abs(lhs - rhs)) <= tol * scale)


def oracle_scores(
    sem: LinearGaussianSem, specs: Sequence[EnvironmentSpec], model: ObservationModel
) -> tuple[AffineScoreFn, list[AffineScoreFn]]:
    obs = analytic_observed_score(sem, EnvironmentSpec.observational(), model)
    return obs, [analytic_observed_score(sem, s, model) for s in specs]


def save_coefficients_csv(path: str | Path, fns: Sequence[AffineScoreFn]) -> None:
    """One row per (function, matrix row): ``fn, row, c0..c{d-1}, offset``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        d = fns[0].dim if fns else 0
        writer.writerow(["fn", "row"] + [f"c{k}" for k in range(d)] + ["offset"])
        for m, f in enumerate(fns):
            for r in range(f.dim):
                writer.writerow([m, r] + f.coeff[r].tolist() + [f.offset[r]])
