"""Second-moment statistics: regression coefficients and Fisher-z partial correlation tests."""

from __future__ import annotations

from dataclasses import dataclass
from math import log, sqrt

import numpy as np
from scipy.stats import norm


@dataclass(frozen=True, eq=False)
class EnvMoments:
    """Covariance of one environment's observations.

    ``n_samples`` is ``None`` for exact population moments, in which case the
    tests below become exact zero checks at a numerical tolerance.
    """

    cov: np.ndarray
    n_samples: int | None = None

    @classmethod
    def from_samples(cls, x: np.ndarray) -> EnvMoments:
        x = np.atleast_2d(x)
        return cls(np.cov(x, rowvar=False).reshape(x.shape[1], x.shape[1]), x.shape[0])


def regression_coefficients(
    cov: np.ndarray, target: int, given: list[int], n_samples: int | None
) -> tuple[np.ndarray, np.ndarray]:
    """``u = -Cov(y, Y) Cov(Y)^-1`` for ``y = col target``, ``Y = cols given``, and its standard errors.

    Standard errors are zero for population moments.
    """
    c_yy = cov[np.ix_(given, given)]
    c_ty = cov[target, given]
    prec = np.linalg.inv(c_yy)
    beta = c_ty @ prec
    if n_samples is None:
        return -beta, np.zeros_like(beta)
    resid = max(float(cov[target, target] - beta @ c_ty), 0.0)
    dof = max(n_samples - len(given) - 1, 1)
    se = np.sqrt(resid * np.diag(prec) / dof)
    return -beta, se


def residual_cross_correlation(cov: np.ndarray, target: int, given: list[int], u: np.ndarray) -> np.ndarray:
    """Correlation of ``y + u @ Y`` with each column of ``Y``."""
    coef = np.zeros(cov.shape[0])
    coef[target] = 1.0
    coef[given] += u
    cross = coef @ cov[:, given]
    var_u = float(coef @ cov @ coef)
    var_y = np.diag(cov)[given]
    denom = np.sqrt(max(var_u, 0.0) * var_y)
    return np.divide(cross, denom, out=np.zeros_like(cross), where=denom > 0)


def partial_correlation(cov: np.ndarray, i: int, j: int, given: list[int]) -> float:
    idx = [i, j] + list(given)
    sub = cov[np.ix_(idx, idx)]
    prec = np.linalg.inv(sub)
    r = -prec[0, 1] / sqrt(prec[0, 0] * prec[1, 1])
    return float(np.clip(r, -1.0, 1.0))


def fisher_z_pvalue(r: float, n_samples: int, n_given: int) -> float:
    dof = n_samples - n_given - 3
    if dof <= 0:
        return 1.0
    r = min(max(r, -1 + 1e-15), 1 - 1e-15)
    z = 0.5 * log((1 + r) / (1 - r)) * sqrt(dof)
    return float(2 * norm.sf(abs(z)))
