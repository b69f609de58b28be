"""Gaussian differential privacy primitives.

Budgets are GDP parameters ``mu``; ``math.inf`` is a valid budget and means
"no privacy", in which case every mechanism adds exactly zero noise while
still consuming its random draws (so private and non-private runs on the
same stream stay aligned).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

from .errors import InvalidInputError
from .numkit import std_normal_cdf, std_normal_quantile

__all__ = [
    "PrivacyBudget",
    "BudgetLedger",
    "make_rng",
    "noise_scale",
    "gaussian_mechanism",
    "compose",
    "tradeoff_g",
]

INF = math.inf


@dataclass(frozen=True)
class PrivacyBudget:
    """A GDP parameter ``mu > 0``; ``inf`` encodes the non-private mode."""

    mu: float

    def __post_init__(self):
        mu = float(self.mu)
        if math.isnan(mu) or mu <= 0.0:
            raise InvalidInputError(f"privacy budget must be > 0, got {self.mu!r}")
        object.__setattr__(self, "mu", mu)

    @property
    def is_private(self) -> bool:
        return math.isfinite(self.mu)

    def __float__(self) -> float:
        return self.mu

    def scaled(self, factor: float) -> "PrivacyBudget":
        return PrivacyBudget(self.mu * factor)


BudgetLike = Union[PrivacyBudget, float, int]


def _mu(b: BudgetLike) -> float:
    return b.mu if isinstance(b, PrivacyBudget) else PrivacyBudget(b).mu


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, *stream)``.

    Identical keys give bit-identical draw sequences; distinct keys give
    statistically independent streams regardless of the order in which they
    are created.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(s) for s in stream)])
    return np.random.Generator(np.random.Philox(ss))


def noise_scale(sensitivity: float, mu: BudgetLike) -> float:
    """Standard deviation ``GS / mu`` of the calibrated Gaussian noise."""
    if not sensitivity >= 0.0 or not math.isfinite(sensitivity):
        raise InvalidInputError(f"invalid sensitivity {sensitivity!r}")
    mu = _mu(mu)
    if math.isinf(mu) or sensitivity == 0.0:
        return 0.0
    return sensitivity / mu


def gaussian_mechanism(h, gs: float, mu: BudgetLike, rng) -> np.ndarray:
    """Release ``h + (gs / mu) * Z`` with ``Z`` standard normal.

    Exactly ``h.size`` normal draws are consumed from ``rng`` in every case.
    With ``mu = inf`` or ``gs = 0`` the output equals ``h``.
    """
    h = np.asarray(h, dtype=float)
    sigma = noise_scale(gs, mu)
    z = rng.standard_normal(h.shape)
    if sigma == 0.0:
        return h.copy()
    return h + sigma * z


def compose(budgets: Iterable[BudgetLike]) -> PrivacyBudget:
    """GDP composition ``sqrt(sum mu_j^2)``.

    Non-private (``inf``) entries are skipped; a list made only of
    non-private entries composes to ``inf``.
    """
    mus = [_mu(b) for b in budgets]
    if not mus:
        raise InvalidInputError("compose needs at least one budget")
    finite = [m for m in mus if math.isfinite(m)]
    if not finite:
        return PrivacyBudget(INF)
    return PrivacyBudget(math.sqrt(math.fsum(m * m for m in finite)))


def tradeoff_g(mu: BudgetLike, alpha: float) -> float:
    """Trade-off function ``G_mu(alpha) = Phi(Phi^{-1}(1 - alpha) - mu)``."""
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInputError("alpha must lie in [0, 1]")
    mu = float(mu.mu if isinstance(mu, PrivacyBudget) else mu)
    if mu < 0 or math.isnan(mu):
        raise InvalidInputError("mu must be >= 0")
    if alpha == 0.0:
        return 1.0 if math.isfinite(mu) else 0.0
    if alpha == 1.0:
        return 0.0
    if math.isinf(mu):
        return 0.0
    return float(std_normal_cdf(std_normal_quantile(1.0 - alpha) - mu))


@dataclass
class BudgetLedger:
    """Record of every privatized release made along an execution path.

    Each entry is ``(label, mu)``. Entries with ``mu = inf`` denote releases
    computed without noise; entries with ``mu = 0`` denote data-independent
    steps that consume no budget.
    """

    entries: list[tuple[str, float]] = field(default_factory=list)

    def spend(self, label: str, mu: float) -> None:
        self.entries.append((label, float(mu)))

    def extend(self, other: "BudgetLedger", prefix: str = "") -> None:
        self.entries.extend((prefix + k, m) for k, m in other.entries)

    def squared_total(self) -> float:
        return math.fsum(m * m for _, m in self.entries if math.isfinite(m))

    def total(self) -> PrivacyBudget:
        spent = [m for _, m in self.entries if m != 0.0]
        if not spent:
            return PrivacyBudget(INF)
        return compose(spent)
