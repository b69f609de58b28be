"""Fit workflow behind ``gdppanel fit`` and ``gdppanel trimmean``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..dpcore import BudgetLedger, PrivacyBudget, compose
from ..inference import (ConfidenceInterval, CovEstimate, combine_two_group, confidence_intervals,
                         dp_covariance, dp_covariance_grouped)
from ..regression import (PanelDataset, ThresholdReport, dp_beta, dp_theta_two_group, local_fits,
                          summary_stat_dp_beta, thresholds)
from ..trimmean import TrimMeanConfig, TrimMeanOutput

__all__ = ["FitOptions", "FitReport", "run_fit", "format_fit", "format_trimmean"]


@dataclass(frozen=True)
class FitOptions:
    mu: float = 1.0
    mu_var: float | None = None
    B: float = 100.0
    R: int = 10
    xi: float = 1e-5
    two_group: bool = False
    correction: bool = True
    alpha: float = 0.05
    summary_stats: bool = False
    raw_gram: bool = False


@dataclass
class FitReport:
    """Everything printed by a fit.

    ``beta_dp`` is the coefficient vector, or the group difference for a
    two-group fit. ``se`` and ``intervals`` are empty without a covariance
    budget.
    """

    beta_dp: np.ndarray
    se: np.ndarray | None
    intervals: list[ConfidenceInterval]
    r_star: list[int]
    B_star: list[float]
    kappa: float | None
    budget_spent: PrivacyBudget
    thresholds: ThresholdReport
    n: int
    d: int
    target: str = "beta"
    arms: dict[str, np.ndarray] = field(default_factory=dict)
    ledger: BudgetLedger = field(default_factory=BudgetLedger)
    summary_beta: np.ndarray | None = None
    summary_budget: PrivacyBudget | None = None


def run_fit(panel: PanelDataset, opts: FitOptions, rng) -> FitReport:
    """Private fit of ``panel``.

    The composed budget is ``mu`` for the point estimate alone and
    ``sqrt(mu^2 + mu_var^2)`` with a covariance. In two-group mode each arm
    spends ``mu / sqrt 2`` on its estimate and ``mu_var / sqrt 2`` on its
    covariance.
    """
    cfg = TrimMeanConfig(opts.mu, opts.B, opts.R, opts.xi)
    fits = local_fits(panel)
    ledger = BudgetLedger()
    cov: CovEstimate | None = None
    arms: dict[str, np.ndarray] = {}
    if opts.two_group:
        res, _ = dp_theta_two_group(panel, cfg, rng, fits)
        ledger.extend(res.ledger)
        point = res.diff
        r_star = [res.arm1.r_star, res.arm0.r_star]
        B_star = [res.arm1.B_star, res.arm0.B_star]
        arms = {"z=1": res.arm1.m_dp, "z=0": res.arm0.m_dp}
        if opts.mu_var is not None:
            arm_var = opts.mu_var / math.sqrt(2.0)
            c1 = dp_covariance_grouped(fits, fits.z, res.arm1, arm_var, rng, opts.correction)
            c0 = dp_covariance_grouped(fits, 1 - fits.z, res.arm0, arm_var, rng, opts.correction)
            ledger.spend("arm1.covariance", arm_var)
            ledger.spend("arm0.covariance", arm_var)
            cov = combine_two_group(c1, c0)
    else:
        out, _ = dp_beta(panel, cfg, rng, fits)
        ledger.extend(out.ledger)
        point = out.m_dp
        r_star = [out.r_star]
        B_star = [out.B_star]
        if opts.mu_var is not None:
            cov = dp_covariance(fits, out, opts.mu_var, rng, opts.correction)
            ledger.spend("covariance", opts.mu_var)

    se = None if cov is None else cov.se
    intervals = [] if cov is None else confidence_intervals(point, cov, opts.alpha)
    T_med = float(np.median([u.T for u in panel.users]))
    thr = thresholds(panel.n, T_med, panel.d, opts.mu, opts.xi, opts.R, opts.B)
    report = FitReport(point, se, intervals, r_star, B_star, None if cov is None else cov.kappa,
                       ledger.total(), thr, panel.n, panel.d,
                       "theta" if opts.two_group else "beta", arms, ledger)
    if opts.summary_stats:
        ss = summary_stat_dp_beta(panel, cfg, cfg, rng, raw_gram=opts.raw_gram)
        report.summary_beta = ss.beta
        report.summary_budget = ss.ledger.total()
    return report


def _mu_str(b: PrivacyBudget | float) -> str:
    mu = b.mu if isinstance(b, PrivacyBudget) else float(b)
    return "inf" if math.isinf(mu) else repr(mu)


def format_fit(rep: FitReport) -> str:
    lines = [f"n_users: {rep.n}", f"d: {rep.d}", f"target: {rep.target}"]
    for name, v in rep.arms.items():
        lines.append(f"arm[{name}]: " + " ".join(f"{x:.6g}" for x in v))
    lines.append("coefficients:")
    lines.append(f"  {'j':>3} {'estimate':>14} {'se':>12} {'lower':>14} {'upper':>14}")
    for j, b in enumerate(rep.beta_dp):
        if rep.intervals:
            ci = rep.intervals[j]
            lines.append(f"  {j + 1:>3} {b:>14.6g} {rep.se[j]:>12.4g} {ci.lower:>14.6g} {ci.upper:>14.6g}")
        else:
            lines.append(f"  {j + 1:>3} {b:>14.6g} {'-':>12} {'-':>14} {'-':>14}")
    if rep.intervals:
        lines.append(f"interval_level: {rep.intervals[0].level:g}")
    lines.append("diagnostics:")
    lines.append("  r_star: " + " ".join(str(r) for r in rep.r_star))
    lines.append("  B_star: " + " ".join(f"{b:.6g}" for b in rep.B_star))
    if rep.kappa is not None:
        lines.append(f"  kappa: {rep.kappa:.6g}")
    t = rep.thresholds
    lines.append(
        f"  thresholds (unit constants): n_min={t.n_min:.4g} T_min={t.T_min:.4g} "
        f"R_min={t.R_min:.4g} B_min={t.B_min:.4g}"
    )
    if rep.summary_beta is not None:
        lines.append("summary_statistic_baseline: " + " ".join(f"{x:.6g}" for x in rep.summary_beta))
        lines.append(f"summary_statistic_budget: mu={_mu_str(rep.summary_budget)}")
    lines.append(f"budget_spent: mu={_mu_str(rep.budget_spent)}")
    return "\n".join(lines) + "\n"


def format_trimmean(out: TrimMeanOutput) -> str:
    lines = []
    lines.append("estimate: " + " ".join(f"{x:.6g}" for x in out.m_dp))
    lines.append(f"r_star: {out.r_star}")
    lines.append(f"final_radius: {out.final_radius:.6g}")
    lines.append(f"B_star: {out.B_star:.6g}")
    lines.append(f"n_lb: {out.n_lb:.6g}")
    if out.aborted:
        lines.append(
            "note: the first count check failed, so too few users lie within B of the origin. "
            "The estimate is a noisy clipped mean over a ball of radius 2B. "
            "Increase --B to cover the data."
        )
    lines.append("rounds:")
    lines.append(f"  {'round':>5} {'radius':>12} {'noisy_count':>12} {'threshold':>10} result")
    for rr in out.trace:
        lines.append(
            f"  {rr.round:>5} {rr.radius:>12.6g} {rr.noisy_count:>12.2f} {rr.threshold:>10.2f} "
            f"{'accepted' if rr.accepted else 'rejected'}"
        )
    lines.append(f"budget_spent: mu={_mu_str(out.ledger.total())}")
    return "\n".join(lines) + "\n"
