"""Private covariance of the private coefficients, intervals and Wald tests.

The covariance estimate is the sample covariance of the local fits that sit
in the final ball of the trimmed mean, plus a ``(B*)^2 I`` correction for
the noise already present in the point estimate, plus symmetric Gaussian
noise, projected back onto the PSD cone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dpcore import PrivacyBudget, compose
from .errors import DegenerateCovarianceError, InvalidInputError, InvalidRestrictionError
from .numkit import chi2_sf, pinv, pinv_rank, psd_project, std_normal_quantile, sym_eigen
from .regression import LocalFits
from .trimmean import TrimMeanOutput

__all__ = [
    "CovEstimate",
    "ConfidenceInterval",
    "WaldResult",
    "covariance_statistic",
    "symmetric_noise",
    "dp_covariance",
    "dp_covariance_grouped",
    "combine_two_group",
    "confidence_intervals",
    "wald_test",
]


@dataclass
class CovEstimate:
    """Private covariance estimate of a private point estimator.

    ``mu_var`` is the budget spent on this matrix alone; ``kappa`` the clip
    radius used for calibration and ``n_included`` the size of the user set.
    """

    V: np.ndarray
    mu_var: float
    kappa: float
    n_included: int
    n_lb: float = 1.0

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.V), 0.0, None))


@dataclass(frozen=True)
class ConfidenceInterval:
    coordinate: int
    lower: float
    upper: float
    level: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class WaldResult:
    statistic: float
    dof: int
    p_value: float
    degenerate: bool = False


def covariance_statistic(fits, point, center, radius, n_lb, z=None) -> tuple[np.ndarray, int]:
    """``(1/n_S^2) sum_{i in S} (b_i - point)(b_i - point)'`` over the closed ball.

    Its Frobenius sensitivity is ``4 kappa^2 / n_lb^2`` with
    ``kappa = radius + ||point - center||``.
    """
    fits = np.asarray(fits, dtype=float)
    dist = np.linalg.norm(fits - center, axis=1)
    if z is None:
        S = dist <= radius
    else:
        z = np.asarray(z)
        S = (dist <= radius * z) & (z == 1)
    k = int(np.count_nonzero(S))
    n_s = max(float(k), n_lb)
    dev = fits[S] - point
    return dev.T @ dev / (n_s * n_s), k


def symmetric_noise(d: int, sd_diag: float, rng) -> np.ndarray:
    """Symmetric Gaussian matrix; off-diagonal sd is ``sd_diag / sqrt 2``.

    Draw order: ``d`` diagonal entries, then the strict upper triangle row
    by row.
    """
    diag = rng.standard_normal(d)
    iu = np.triu_indices(d, 1)
    upper = rng.standard_normal(len(iu[0]))
    W = np.zeros((d, d))
    if sd_diag == 0.0:
        return W
    W[iu] = upper * (sd_diag / math.sqrt(2.0))
    W = W + W.T
    W[np.diag_indices(d)] = diag * sd_diag
    return W


def _cov(fits, z, out: TrimMeanOutput, mu_var, rng, correction: bool) -> CovEstimate:
    mu_var = PrivacyBudget(mu_var).mu
    if out.r_star == -1:
        raise DegenerateCovarianceError(
            "trimmed mean stopped at its first check; covariance is undefined for this run"
        )
    beta = np.asarray(fits.beta if isinstance(fits, LocalFits) else fits, dtype=float)
    d = beta.shape[1]
    radius = out.final_radius
    delta = float(np.linalg.norm(out.m_dp - out.prev_center))
    kappa = radius + delta
    V, k = covariance_statistic(beta, out.m_dp, out.prev_center, radius, out.n_lb, z)
    if correction:
        V = V + out.B_star**2 * np.eye(d)
    sd = 0.0 if math.isinf(mu_var) else 4.0 * kappa**2 / (out.n_lb**2 * mu_var)
    V = V + symmetric_noise(d, sd, rng)
    return CovEstimate(psd_project(V), mu_var, kappa, k, out.n_lb)


def dp_covariance(fits, trim_out: TrimMeanOutput, mu_var, rng, correction: bool = True) -> CovEstimate:
    """Private covariance of ``trim_out.m_dp`` from the local fits.

    Only released quantities of the trimmed-mean run are used (estimate,
    final center, termination round, ``n_lb``, ``B*``) plus the raw fits.

    Raises
    ------
    DegenerateCovarianceError
        When the trimmed mean aborted at its first check (``r_star == -1``).
    """
    return _cov(fits, None, trim_out, mu_var, rng, correction)


def dp_covariance_grouped(fits, z, treat_out: TrimMeanOutput, mu_var, rng,
                          correction: bool = True) -> CovEstimate:
    """As :func:`dp_covariance`, restricted to users with ``z_i = 1``."""
    z = np.asarray(z)
    beta = np.asarray(fits.beta if isinstance(fits, LocalFits) else fits)
    if z.shape != (beta.shape[0],) or not np.all((z == 0) | (z == 1)):
        raise InvalidInputError("z must be a 0/1 vector with one entry per user")
    return _cov(beta, z, treat_out, mu_var, rng, correction)


def combine_two_group(cov1: CovEstimate, cov0: CovEstimate) -> CovEstimate:
    """Covariance of a difference of independent arm estimates."""
    return CovEstimate(
        cov1.V + cov0.V,
        compose([cov1.mu_var, cov0.mu_var]).mu,
        max(cov1.kappa, cov0.kappa),
        cov1.n_included + cov0.n_included,
        min(cov1.n_lb, cov0.n_lb),
    )


def confidence_intervals(point, cov: CovEstimate | np.ndarray, alpha: float = 0.05) -> list[ConfidenceInterval]:
    """Per-coordinate normal intervals ``point_j +/- z_{1-alpha/2} sqrt(V_jj)``."""
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must lie in (0, 1)")
    V = cov.V if isinstance(cov, CovEstimate) else np.asarray(cov, dtype=float)
    point = np.asarray(point, dtype=float)
    q = std_normal_quantile(1.0 - alpha / 2.0)
    half = q * np.sqrt(np.clip(np.diag(V), 0.0, None))
    return [ConfidenceInterval(j, float(point[j] - half[j]), float(point[j] + half[j]), 1.0 - alpha)
            for j in range(point.shape[0])]


def wald_test(point, cov: CovEstimate | np.ndarray, Rmat, rvec) -> WaldResult:
    """Wald statistic for ``H0: Rmat @ beta = rvec`` and its chi-square p-value."""
    V = cov.V if isinstance(cov, CovEstimate) else np.asarray(cov, dtype=float)
    Rmat = np.atleast_2d(np.asarray(Rmat, dtype=float))
    rvec = np.atleast_1d(np.asarray(rvec, dtype=float))
    point = np.asarray(point, dtype=float)
    q, d = Rmat.shape
    if d != point.shape[0] or rvec.shape != (q,):
        raise InvalidInputError("restriction dimensions do not match the estimate")
    _, rank = pinv_rank(Rmat)
    if int(rank) < q:
        raise InvalidRestrictionError("restriction matrix must have full row rank")
    diff = Rmat @ point - rvec
    M = Rmat @ V @ Rmat.T
    M = 0.5 * (M + M.T)
    w, _ = sym_eigen(M)
    degenerate = not (w[-1] > 1e-12 * max(w[0], 0.0)) or w[0] <= 0.0
    if not np.any(diff):
        return WaldResult(0.0, q, 1.0, degenerate)
    if degenerate:
        stat = float(diff @ pinv(M) @ diff)
    else:
        stat = float(diff @ np.linalg.solve(M, diff))
    stat = max(stat, 0.0)
    return WaldResult(stat, q, float(chi2_sf(stat, q)), degenerate)
