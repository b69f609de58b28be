"""Small dense linear algebra and distribution functions.

Everything here works on plain ``numpy`` arrays. Matrices are expected to be
small (dimension up to a few dozen), which is the regime of per-user
regression fits and their covariance matrices.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from .errors import DegenerateCovarianceError, InvalidInputError

__all__ = [
    "pinv",
    "pinv_rank",
    "sym_eigen",
    "psd_project",
    "inv_sqrt_psd",
    "std_normal_cdf",
    "std_normal_quantile",
    "chi2_sf",
    "chi2_quantile",
]

PINV_RTOL = 1e-12


def _as_finite(a, name: str = "input") -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def pinv_rank(A, rel_tol: float = PINV_RTOL) -> tuple[np.ndarray, np.ndarray]:
    """Moore-Penrose pseudoinverse together with the numerical rank.

    Accepts a single matrix of shape ``(m, n)`` or a stack ``(..., m, n)``.
    Singular values at or below ``rel_tol * sigma_max`` (per matrix) are
    treated as zero.

    Returns
    -------
    pinv : ndarray, shape (..., n, m)
    rank : ndarray of int, shape (...)
    """
    A = _as_finite(A, "matrix")
    if A.ndim < 2:
        raise InvalidInputError("pinv expects at least a 2-d array")
    if rel_tol < 0:
        raise InvalidInputError("rel_tol must be non-negative")
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    smax = s[..., :1]
    keep = s > rel_tol * smax
    s_inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    out = np.swapaxes(vt, -1, -2) @ (s_inv[..., :, None] * np.swapaxes(u, -1, -2))
    return out, keep.sum(axis=-1)


def pinv(A, rel_tol: float = PINV_RTOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse, see :func:`pinv_rank`."""
    return pinv_rank(A, rel_tol)[0]


def _check_symmetric(S) -> np.ndarray:
    S = _as_finite(S, "symmetric matrix")
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {S.shape}")
    scale = max(1.0, float(np.max(np.abs(S), initial=0.0)))
    if np.max(np.abs(S - S.T), initial=0.0) > 1e-10 * scale:
        raise InvalidInputError("matrix is not symmetric")
    return S


def sym_eigen(S, tol: float = 1e-15, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues in descending order and the matching orthonormal
    eigenvectors as columns, so that ``S = V @ diag(w) @ V.T``.
    """
    S = _check_symmetric(S)
    n = S.shape[0]
    a = 0.5 * (S + S.T)
    v = np.eye(n)
    fro = np.linalg.norm(a)
    sweeps = 0 if fro == 0.0 or n == 1 else max_sweeps

    for _ in range(sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * fro:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                with np.errstate(over="ignore"):
                    # theta = inf for denormal apq gives t = 0, a null rotation
                    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(1.0, theta))
                c = 1.0 / math.hypot(1.0, t)
                s = t * c
                # rotate rows/cols p and q
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq

    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def _reassemble(w: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = (v * w) @ v.T
    return 0.5 * (out + out.T)


def psd_project(S) -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix.

    Negative eigenvalues are clamped to zero. A matrix whose computed
    eigenvalues are all nonnegative is returned symmetrized but otherwise
    untouched; a clamped result may carry eigenvalues of order ``-1e-16``
    from rounding, so a second projection changes it only at that level.
    """
    S = _check_symmetric(S)
    w, v = sym_eigen(S)
    if w[-1] >= 0.0:
        return 0.5 * (S + S.T)
    return _reassemble(np.clip(w, 0.0, None), v)


def inv_sqrt_psd(S, floor: float | None = None) -> np.ndarray:
    """Inverse symmetric square root of a PSD matrix.

    Eigenvalues are floored at ``floor`` (default ``1e-12 * trace(S)``) before
    inversion.
    """
    S = _check_symmetric(S)
    tr = float(np.trace(S))
    if not np.any(S) or tr <= 0.0:
        raise DegenerateCovarianceError("cannot invert the square root of a zero matrix")
    if floor is None:
        floor = 1e-12 * tr
    w, v = sym_eigen(S)
    w = np.maximum(w, floor)
    return _reassemble(1.0 / np.sqrt(w), v)


def std_normal_cdf(x):
    """Standard normal CDF."""
    return special.ndtr(x)


def std_normal_quantile(p):
    """Standard normal quantile for ``0 < p < 1``."""
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0.0) | ~(arr < 1.0)):
        raise InvalidInputError("normal quantile requires 0 < p < 1")
    out = special.ndtri(arr)
    return float(out) if out.ndim == 0 else out


def chi2_sf(x, dof: int):
    """Upper tail probability of the chi-square distribution."""
    if dof < 1:
        raise InvalidInputError("chi-square dof must be >= 1")
    arr = np.asarray(x, dtype=float)
    out = np.where(arr <= 0.0, 1.0, special.chdtrc(dof, np.maximum(arr, 0.0)))
    return float(out) if out.ndim == 0 else out


def chi2_quantile(p, dof: int):
    """Chi-square quantile for ``0 < p < 1``."""
    if dof < 1:
        raise InvalidInputError("chi-square dof must be >= 1")
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0.0) | ~(arr < 1.0)):
        raise InvalidInputError("chi-square quantile requires 0 < p < 1")
    a = 0.5 * dof
    out = 2.0 * np.where(
        arr <= 0.5, special.gammaincinv(a, arr), special.gammainccinv(a, 1.0 - arr)
    )
    return float(out) if out.ndim == 0 else out
