"""Per-user least squares and private aggregation of the local fits."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .dpcore import BudgetLedger, PrivacyBudget
from .errors import InvalidInputError
from .numkit import pinv, pinv_rank
from .trimmean import TrimMeanConfig, TrimMeanOutput, dp_treat_mean, dp_trim_mean

__all__ = [
    "UserBlock",
    "PanelDataset",
    "LocalFit",
    "LocalFits",
    "ThresholdReport",
    "TwoGroupResult",
    "SummaryStatResult",
    "local_ols",
    "local_fits",
    "local_fits_balanced",
    "mean_of_locals",
    "dp_beta",
    "dp_theta_two_group",
    "summary_stat_dp_beta",
    "thresholds",
]


@dataclass(frozen=True)
class UserBlock:
    """All rows contributed by one user."""

    user_id: Hashable
    X: np.ndarray
    Y: np.ndarray
    z: int | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise InvalidInputError(f"user {self.user_id!r}: X must be 2-d")
        if X.shape[0] == 0:
            raise InvalidInputError(f"user {self.user_id!r}: empty block")
        if X.shape[0] != Y.shape[0]:
            raise InvalidInputError(
                f"user {self.user_id!r}: X has {X.shape[0]} rows but Y has {Y.shape[0]}"
            )
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise InvalidInputError(f"user {self.user_id!r}: non-finite values")
        if self.z is not None and self.z not in (0, 1):
            raise InvalidInputError(f"user {self.user_id!r}: z must be 0 or 1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def T(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class PanelDataset:
    """Possibly unbalanced panel of users sharing the covariate dimension ``d``."""

    users: tuple[UserBlock, ...]
    d: int

    def __post_init__(self):
        users = tuple(self.users)
        if len(users) < 2:
            raise InvalidInputError("a panel needs at least two users")
        for u in users:
            if u.X.shape[1] != self.d:
                raise InvalidInputError(
                    f"user {u.user_id!r} has {u.X.shape[1]} covariates, expected {self.d}"
                )
        object.__setattr__(self, "users", users)

    @classmethod
    def from_blocks(cls, users: Sequence[UserBlock]) -> "PanelDataset":
        if not users:
            raise InvalidInputError("no users")
        return cls(tuple(users), users[0].X.shape[1])

    @classmethod
    def balanced(cls, X, Y, z=None, user_ids=None) -> "PanelDataset":
        """Build from arrays ``X (n, T, d)`` and ``Y (n, T)``."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        n = X.shape[0]
        ids = range(n) if user_ids is None else user_ids
        zs = [None] * n if z is None else [int(v) for v in z]
        blocks = tuple(UserBlock(i, X[k], Y[k], zs[k]) for k, i in enumerate(ids))
        return cls(blocks, X.shape[2])

    @property
    def n(self) -> int:
        return len(self.users)

    @property
    def has_groups(self) -> bool:
        return all(u.z is not None for u in self.users)

    @property
    def z(self) -> np.ndarray:
        if not self.has_groups:
            raise InvalidInputError("panel has no group labels")
        return np.array([u.z for u in self.users], dtype=np.int8)

    @property
    def n_obs(self) -> int:
        return sum(u.T for u in self.users)

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """Pooled design matrix and response."""
        return (np.concatenate([u.X for u in self.users]),
                np.concatenate([u.Y for u in self.users]))

    def scale_response(self, c: float) -> "PanelDataset":
        return PanelDataset(tuple(UserBlock(u.user_id, u.X, c * u.Y, u.z) for u in self.users), self.d)


@dataclass(frozen=True)
class LocalFit:
    beta: np.ndarray
    rank_deficient: bool


@dataclass
class LocalFits:
    """Local coefficient vectors for every user, row ``i`` for user ``i``."""

    beta: np.ndarray
    rank_deficient: np.ndarray
    z: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.beta.shape[0]

    def __len__(self) -> int:
        return self.n


def local_ols(block: UserBlock) -> LocalFit:
    """Minimum-norm least squares fit ``pinv(X_i) @ Y_i`` of one user."""
    p, rank = pinv_rank(block.X)
    return LocalFit(p @ block.Y, bool(rank < block.X.shape[1]))


def local_fits(panel: PanelDataset) -> LocalFits:
    """Local fits of every user.

    Users are batched by panel length; every user goes through the same SVD
    path whatever its rank.
    """
    n, d = panel.n, panel.d
    beta = np.empty((n, d))
    deficient = np.empty(n, dtype=bool)
    by_len: dict[int, list[int]] = {}
    for i, u in enumerate(panel.users):
        by_len.setdefault(u.T, []).append(i)
    for T, idx in by_len.items():
        X = np.stack([panel.users[i].X for i in idx])
        Y = np.stack([panel.users[i].Y for i in idx])
        P, rank = pinv_rank(X)
        beta[idx] = (P @ Y[..., None])[..., 0]
        deficient[idx] = rank < d
    z = panel.z if panel.has_groups else None
    return LocalFits(beta, deficient, z)


def local_fits_balanced(X, Y, z=None) -> LocalFits:
    """Local fits from balanced arrays ``X (n, T, d)`` and ``Y (n, T)``.

    Same arithmetic as :func:`local_fits` without building user blocks.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    P, rank = pinv_rank(X)
    beta = (P @ Y[..., None])[..., 0]
    return LocalFits(beta, rank < X.shape[2], None if z is None else np.asarray(z, dtype=np.int8))


def mean_of_locals(panel: PanelDataset | LocalFits) -> np.ndarray:
    """Plain average of the local fits."""
    fits = panel if isinstance(panel, LocalFits) else local_fits(panel)
    return fits.beta.mean(axis=0)


def dp_beta(panel: PanelDataset, cfg: TrimMeanConfig, rng,
            fits: LocalFits | None = None) -> tuple[TrimMeanOutput, LocalFits]:
    """Private regression coefficients: trimmed mean of the local fits.

    The trimmed mean is run with failure probability ``cfg.xi / 2``. The
    returned local fits are raw per-user data; they are needed for the
    private covariance step and must not be released.
    """
    if fits is None:
        fits = local_fits(panel)
    out = dp_trim_mean(fits.beta, cfg.replace(xi=cfg.xi / 2.0), rng)
    return out, fits


@dataclass
class TwoGroupResult:
    """Arm estimates for ``z = 1`` and ``z = 0`` and their difference."""

    arm1: TrimMeanOutput
    arm0: TrimMeanOutput
    diff: np.ndarray
    ledger: BudgetLedger

    @property
    def budget(self) -> PrivacyBudget:
        return self.ledger.total()


def dp_theta_two_group(panel: PanelDataset, cfg: TrimMeanConfig, rng,
                       fits: LocalFits | None = None) -> tuple[TwoGroupResult, LocalFits]:
    """Private group difference ``beta_1 - beta_0`` with private membership.

    Each arm runs the treated-mean estimator at budget ``mu / sqrt 2`` and
    failure probability ``xi / 4``, so the pair composes to ``mu``.
    """
    if fits is None:
        fits = local_fits(panel)
    if fits.z is None:
        raise InvalidInputError("two-group estimation needs a group label for every user")
    z = fits.z
    if z.all() or not z.any():
        warnings.warn("only one group is present; the other arm estimates noise only",
                      RuntimeWarning, stacklevel=2)
    arm_cfg = cfg.replace(mu=cfg.mu / math.sqrt(2.0), xi=cfg.xi / 4.0)
    arm1 = dp_treat_mean(fits.beta, z, arm_cfg, rng)
    arm0 = dp_treat_mean(fits.beta, 1 - z, arm_cfg, rng)
    ledger = BudgetLedger()
    ledger.extend(arm1.ledger, "arm1.")
    ledger.extend(arm0.ledger, "arm0.")
    return TwoGroupResult(arm1, arm0, arm1.m_dp - arm0.m_dp, ledger), fits


@dataclass
class SummaryStatResult:
    beta: np.ndarray
    gram: np.ndarray
    cross: np.ndarray
    singular: bool
    ledger: BudgetLedger = field(default_factory=BudgetLedger)


def summary_stat_dp_beta(panel: PanelDataset, cfg_xx: TrimMeanConfig, cfg_xy: TrimMeanConfig,
                         rng, raw_gram: bool = False) -> SummaryStatResult:
    """Baseline that privatizes the sufficient statistics instead of the fits.

    Each user's upper-triangular ``X_i'X_i`` and ``X_i'Y_i`` are averaged
    with the trimmed mean and recombined as ``gram^{-1} cross``. By default
    both are divided by ``T_i`` first; ``raw_gram=True`` keeps the raw sums.
    """
    d = panel.d
    iu = np.triu_indices(d)
    gram_rows, cross_rows = [], []
    for u in panel.users:
        scale = 1.0 if raw_gram else 1.0 / u.T
        gram_rows.append((u.X.T @ u.X)[iu] * scale)
        cross_rows.append((u.X.T @ u.Y) * scale)
    out_xx = dp_trim_mean(np.array(gram_rows), cfg_xx, rng)
    out_xy = dp_trim_mean(np.array(cross_rows), cfg_xy, rng)
    gram = np.zeros((d, d))
    gram[iu] = out_xx.m_dp
    gram = gram + np.triu(gram, 1).T
    cross = out_xy.m_dp
    singular = False
    try:
        if np.linalg.cond(gram) > 1e12:
            raise np.linalg.LinAlgError
        beta = np.linalg.solve(gram, cross)
    except np.linalg.LinAlgError:
        singular = True
        beta = pinv(gram) @ cross
    ledger = BudgetLedger()
    ledger.extend(out_xx.ledger, "gram.")
    ledger.extend(out_xy.ledger, "cross.")
    return SummaryStatResult(beta, gram, cross, singular, ledger)


@dataclass(frozen=True)
class ThresholdReport:
    """Advisory sample-size, panel-length, round and radius thresholds."""

    n_min: float
    T_min: float
    R_min: float
    B_min: float
    constants_used: tuple[float, float, float, float]
    satisfied: dict[str, bool]

    def as_dict(self) -> dict:
        return {
            "n_min": self.n_min,
            "T_min": self.T_min,
            "R_min": self.R_min,
            "B_min": self.B_min,
            "constants": list(self.constants_used),
            "satisfied": dict(self.satisfied),
        }


def _t_min(n: float, xi: float, d: int, C2: float, limit: int = 10**9) -> float:
    def g(T):
        return C2 * (d + np.log(n * T / xi)) ** 2

    lo = 1
    step = 1024
    while lo <= limit:
        Ts = np.arange(lo, lo + step, dtype=float)
        ok = np.nonzero(Ts >= g(Ts))[0]
        if ok.size:
            return float(Ts[ok[0]])
        lo += step
        step = min(step * 2, 1 << 22)
    return math.inf


def thresholds(n, T, d, mu, xi, R, B, beta_norm_guess=0.0,
               constants=(1.0, 1.0, 1.0, 1.0)) -> ThresholdReport:
    """Evaluate the four scaling thresholds with user-chosen constants.

    These are diagnostics only; the constants are not known in general.
    """
    C1, C2, C3, C4 = (float(c) for c in constants)
    n_min = 0.0 if math.isinf(mu) else C1 / mu * math.sqrt(R * (math.log(R / xi) + d))
    T_min = _t_min(n, xi, d, C2)
    R_min = C3 * math.log(B * math.sqrt(T))
    B_min = beta_norm_guess + C4 * math.sqrt((d + math.log(n / xi)) / T)
    satisfied = {"n": n >= n_min, "T": T >= T_min, "R": R >= R_min, "B": B >= B_min}
    return ThresholdReport(n_min, T_min, R_min, B_min, (C1, C2, C3, C4), satisfied)
