"""Adaptive private trimmed-mean estimation.

The estimator starts from a ball of radius ``B`` around the origin and, round
by round, privately checks whether (almost) all users fall inside a ball of
half the radius around the current private center. While the check passes,
the center is refined with a clipped mean whose sensitivity shrinks with the
radius. When it fails, or after ``R`` rounds, a final estimate is released
using the last ball that passed; unused budget from skipped rounds is folded
into that final release.

Three entry points share one loop:

``dp_trim_mean``
    budget split ``(mu/(2 sqrt R), mu/(2 sqrt R), mu/sqrt 2)``.
``dp_trim_mean_general``
    arbitrary split ``(mu1, mu2, mu3)`` between refinements, count checks and
    the final release.
``dp_treat_mean``
    mean over the ``z = 1`` users only, with group membership itself kept
    private (noisy group size, membership-masked balls).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dpcore import BudgetLedger, PrivacyBudget
from .errors import InsufficientUsersError, InvalidInputError

__all__ = [
    "TrimMeanConfig",
    "GeneralBudget",
    "RoundRecord",
    "TrimMeanOutput",
    "count_statistic",
    "clipped_mean_statistic",
    "dp_trim_mean",
    "dp_trim_mean_general",
    "dp_treat_mean",
    "n_min_advisory",
]


@dataclass(frozen=True)
class TrimMeanConfig:
    """Settings of the trimmed mean: budget, initial radius, rounds, failure prob."""

    mu: float
    B: float
    R: int
    xi: float

    def __post_init__(self):
        object.__setattr__(self, "mu", PrivacyBudget(self.mu).mu)
        if not (self.B > 0 and math.isfinite(self.B)):
            raise InvalidInputError(f"B must be a positive finite radius, got {self.B!r}")
        if int(self.R) != self.R or self.R < 1:
            raise InvalidInputError(f"R must be an integer >= 1, got {self.R!r}")
        object.__setattr__(self, "R", int(self.R))
        if not 0.0 < self.xi < 1.0:
            raise InvalidInputError(f"xi must lie in (0, 1), got {self.xi!r}")

    def replace(self, **changes) -> "TrimMeanConfig":
        vals = dict(mu=self.mu, B=self.B, R=self.R, xi=self.xi)
        vals.update(changes)
        return TrimMeanConfig(**vals)


@dataclass(frozen=True)
class GeneralBudget:
    """Per-release budgets: center refinement, count check, final release."""

    mu1: float
    mu2: float
    mu3: float

    def __post_init__(self):
        for name in ("mu1", "mu2", "mu3"):
            object.__setattr__(self, name, PrivacyBudget(getattr(self, name)).mu)

    @classmethod
    def from_total(cls, mu: float, R: int) -> "GeneralBudget":
        return cls(mu / (2.0 * math.sqrt(R)), mu / (2.0 * math.sqrt(R)), mu / math.sqrt(2.0))

    def total(self, R: int) -> float:
        """Composed budget ``sqrt(R mu1^2 + R mu2^2 + mu3^2)``."""
        parts = [m for m in (self.mu1, self.mu2, self.mu3) if math.isfinite(m)]
        if not parts:
            return math.inf
        sq = 0.0
        if math.isfinite(self.mu1):
            sq += R * self.mu1**2
        if math.isfinite(self.mu2):
            sq += R * self.mu2**2
        if math.isfinite(self.mu3):
            sq += self.mu3**2
        return math.sqrt(sq)


@dataclass(frozen=True)
class RoundRecord:
    round: int
    radius: float
    noisy_count: float
    threshold: float
    accepted: bool


@dataclass
class TrimMeanOutput:
    """Released quantities of one trimmed-mean run.

    Attributes
    ----------
    m_dp : ndarray
        Private mean estimate.
    prev_center : ndarray
        Center of the final ball (the private center one round before
        ``r_star``).
    r_star : int
        Termination round, in ``{-1, ..., R}``. ``-1`` means the very first
        check failed (initial ball too small).
    B_star : float
        Standard deviation of the noise added in the final release.
    n_lb : float
        Private lower bound on the number of users in the final ball.
    config : TrimMeanConfig
    trace : list of RoundRecord
        Per-round audit log (noisy counts are themselves private releases).
    ledger : BudgetLedger
    """

    m_dp: np.ndarray
    prev_center: np.ndarray
    r_star: int
    B_star: float
    n_lb: float
    config: TrimMeanConfig
    trace: list[RoundRecord] = field(default_factory=list)
    ledger: BudgetLedger = field(default_factory=BudgetLedger)

    @property
    def final_radius(self) -> float:
        """Radius ``B / 2**r_star`` of the final ball."""
        return math.ldexp(self.config.B, -self.r_star)

    @property
    def aborted(self) -> bool:
        return self.r_star == -1


def _check_data(data) -> np.ndarray:
    D = np.asarray(data, dtype=float)
    if D.ndim == 1:
        D = D[:, None]
    if D.ndim != 2:
        raise InvalidInputError("data must be a list of equal-length vectors")
    if D.shape[0] < 2:
        raise InvalidInputError("need at least two users")
    if not np.all(np.isfinite(D)):
        raise InvalidInputError("data contains non-finite entries")
    return D


def _membership(D, center, radius, z=None, strict=True) -> np.ndarray:
    dist = np.linalg.norm(D - center, axis=1)
    if z is None:
        return dist < radius if strict else dist <= radius
    rad = radius * z
    inside = dist < rad if strict else dist <= rad
    return inside & (z == 1)


def count_statistic(D, center, radius, z=None, strict=False) -> float:
    """Number of users within ``radius`` of ``center``; sensitivity 1.

    With a membership vector ``z`` only ``z_i = 1`` users are counted and the
    ball test is always strict.
    """
    D = np.asarray(D, dtype=float)
    if z is None:
        return float(np.count_nonzero(_membership(D, center, radius, None, strict)))
    z = np.asarray(z)
    return float(np.count_nonzero(_membership(D, center, radius, z, True)))


def clipped_mean_statistic(D, center, radius, n_lb, z=None) -> tuple[np.ndarray, int]:
    """Trimmed mean shift ``(1/n_S) sum_{i in S} (D_i - center)``.

    ``S`` holds users strictly inside the ball (and with ``z_i = 1`` when a
    membership vector is given); ``n_S = max(|S|, n_lb)``. The l2
    sensitivity is ``2 * radius / n_lb``.
    """
    D = np.asarray(D, dtype=float)
    center = np.asarray(center, dtype=float)
    S = _membership(D, center, radius, None if z is None else np.asarray(z), True)
    k = int(np.count_nonzero(S))
    n_s = max(float(k), n_lb)
    shift = np.sum(D[S] - center, axis=0) / n_s
    return shift, k


def _tau_margin(mu2: float, R: int, xi: float) -> float:
    if math.isinf(mu2):
        return 0.0
    return math.sqrt(2.0 * math.log(4.0 * R / xi)) / mu2


def n_min_advisory(mu: float, R: int, xi: float, d: int, C1: float = 1.0) -> float:
    """Sample-size threshold ``C1/mu sqrt(R (log(R/xi) + d))``."""
    if math.isinf(mu):
        return 0.0
    return C1 / mu * math.sqrt(R * (math.log(R / xi) + d))


def _scale(numer: float, mu: float) -> float:
    return 0.0 if math.isinf(mu) else numer / mu


def _recapture(gb: GeneralBudget, R: int, r: int) -> float:
    """Factor by which the final release budget grows when exiting at round r."""
    if math.isinf(gb.mu3):
        return 1.0
    left = R - r
    extra = 0.0
    for m in (gb.mu1, gb.mu2):
        if left > 0:
            if math.isinf(m):
                return math.inf
            extra += left * m * m
    return math.sqrt(extra + gb.mu3**2) / gb.mu3


def _run(
    D: np.ndarray,
    z: np.ndarray | None,
    gb: GeneralBudget,
    B: float,
    R: int,
    tau: float,
    n_lb: float,
    rng,
    config: TrimMeanConfig,
    ledger: BudgetLedger,
) -> TrimMeanOutput:
    n, d = D.shape
    count_strict = z is not None
    # centers[k + 2] holds the private center of round k; rounds -2, -1 are 0
    centers = [np.zeros(d), np.zeros(d)]
    trace: list[RoundRecord] = []
    r = 0
    while True:
        radius = math.ldexp(B, -r)
        prev = centers[r + 1]
        count = count_statistic(D, prev, radius, z, strict=count_strict)
        omega = count + _scale(1.0, gb.mu2) * rng.standard_normal()
        # the round 0 count is n whenever every ||D_i|| <= B, so it is free on
        # that domain; the stated totals count only R checks
        ledger.spend(f"count[{r}]", gb.mu2 if r >= 1 else 0.0)
        accepted = not omega < tau
        trace.append(RoundRecord(r, radius, float(omega), tau, accepted))

        if not accepted:
            C = _recapture(gb, R, r)
            center = centers[r]
            ball = math.ldexp(B, -(r - 1))
            shift, _ = clipped_mean_statistic(D, center, ball, n_lb, z)
            sigma = 0.0 if math.isinf(C * gb.mu3) else 2.0 * ball / (C * gb.mu3 * n_lb)
            noise = rng.standard_normal(d)
            m_dp = center + shift + sigma * noise
            ledger.spend("final", C * gb.mu3)
            return TrimMeanOutput(m_dp, center.copy(), r - 1, sigma, n_lb, config, trace, ledger)

        if r == R:
            center = prev
            shift, _ = clipped_mean_statistic(D, center, radius, n_lb, z)
            sigma = _scale(2.0 * radius / n_lb, gb.mu3)
            noise = rng.standard_normal(d)
            m_dp = center + shift + sigma * noise
            ledger.spend("final", gb.mu3)
            return TrimMeanOutput(m_dp, center.copy(), R, sigma, n_lb, config, trace, ledger)

        shift, _ = clipped_mean_statistic(D, prev, radius, n_lb, z)
        sigma = _scale(2.0 * radius / n_lb, gb.mu1)
        centers.append(prev + shift + sigma * rng.standard_normal(d))
        ledger.spend(f"refine[{r}]", gb.mu1)
        r += 1


def _insufficient(n: int, margin: float, mu: float, R: int, xi: float, d: int):
    # smallest n with tau = n - margin > 1
    need = math.floor(margin + 1.0) + 1
    return InsufficientUsersError(n, need, n_min_advisory(mu, R, xi, d))


def dp_trim_mean_general(data, gb: GeneralBudget, B: float, R: int, xi: float, rng,
                         config: TrimMeanConfig | None = None) -> TrimMeanOutput:
    """Trimmed mean with an explicit ``(mu1, mu2, mu3)`` budget split.

    The composed guarantee is ``gb.total(R)``; see :class:`GeneralBudget`.
    """
    D = _check_data(data)
    n, d = D.shape
    if config is None:
        config = TrimMeanConfig(gb.total(R), B, R, xi)
    margin = _tau_margin(gb.mu2, R, xi)
    tau = n - margin
    if tau <= 1.0:
        raise _insufficient(n, margin, config.mu, R, xi, d)
    n_lb = max(2.0 * tau - n, 1.0)
    return _run(D, None, gb, float(B), int(R), tau, n_lb, rng, config, BudgetLedger())


def dp_trim_mean(data, cfg: TrimMeanConfig, rng) -> TrimMeanOutput:
    """Private mean of user vectors under ``cfg.mu``-GDP.

    Parameters
    ----------
    data : array_like, shape (n, d)
        One vector per user, each of norm at most ``cfg.B``. The round 0
        count is left uncharged because it equals ``n`` on that domain; if
        some vector is longer the run spends ``sqrt(mu^2 + mu^2/(4R))``
        instead of ``mu``.
    cfg : TrimMeanConfig
    rng : numpy.random.Generator

    Raises
    ------
    InsufficientUsersError
        When ``n`` is too small for the count threshold to exceed one.
    """
    gb = GeneralBudget.from_total(cfg.mu, cfg.R)
    return dp_trim_mean_general(data, gb, cfg.B, cfg.R, cfg.xi, rng, config=cfg)


def dp_treat_mean(data, z, cfg: TrimMeanConfig, rng) -> TrimMeanOutput:
    """Private mean over the users with ``z_i = 1``, keeping ``z`` private.

    A noisy group size (budget ``mu/2``) sets the count threshold and user
    lower bound; the loop then runs with budgets ``mu/(2 sqrt R)`` per
    refinement and count check and ``mu/2`` for the final release. Users
    with ``z_i = 0`` never enter any ball.
    """
    D = _check_data(data)
    n, d = D.shape
    z = np.asarray(z)
    if z.shape != (n,) or not np.all((z == 0) | (z == 1)):
        raise InvalidInputError("z must be a 0/1 vector with one entry per user")
    z = z.astype(np.int8)
    mu, R, xi = cfg.mu, cfg.R, cfg.xi
    gb = GeneralBudget(mu / (2.0 * math.sqrt(R)), mu / (2.0 * math.sqrt(R)), mu / 2.0)
    ledger = BudgetLedger()
    z_tilde = float(z.sum()) + _scale(2.0, mu) * rng.standard_normal()
    ledger.spend("group_size", mu / 2.0)
    margin = _tau_margin(gb.mu2, R, xi)
    size_margin = 0.0 if math.isinf(mu) else 2.0 / mu * math.sqrt(2.0 * math.log(8.0 / xi))
    tau_raw = z_tilde - margin - size_margin
    if tau_raw <= 1.0:
        raise _insufficient(n, margin + size_margin, mu, R, xi, d)
    tau = max(tau_raw, 1.0)
    n_lb = max(tau - margin, 1.0)
    return _run(D, z, gb, cfg.B, R, tau, n_lb, rng, cfg, ledger)
