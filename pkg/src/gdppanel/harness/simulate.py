"""Monte Carlo driver for the estimation, interval and two-group studies.

Every replication is keyed by ``(base_seed, n, T, rep)``. The panel is
drawn from sub-stream 0 and shared by all methods; method ``k`` draws its
privacy noise from sub-stream ``k + 1``. Results therefore do not depend on
how replications are scheduled across worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..datagen import SimModel, gen_arrays, pooled_ols_arrays
from ..dpcore import make_rng
from ..errors import DegenerateCovarianceError, GDPPanelError, InvalidInputError, ParseError
from ..inference import combine_two_group, dp_covariance, dp_covariance_grouped, wald_test
from ..numkit import inv_sqrt_psd, std_normal_quantile
from ..regression import dp_beta, dp_theta_two_group, local_fits_balanced
from ..trimmean import TrimMeanConfig

__all__ = [
    "SimulationSpec",
    "TableRow",
    "replicate",
    "run_simulation",
    "write_table",
    "KINDS",
]

KINDS = ("estimation", "inference", "two_group")
COLUMNS = ("n", "T", "method", "metric", "value", "mc_se", "config_hash")


def _mu(v) -> float:
    return math.inf if str(v).lower() in ("inf", "infinity") else float(v)


def _mu_json(v: float):
    return "inf" if math.isinf(v) else v


def _label(v: float) -> str:
    return "inf" if math.isinf(v) else f"{v:g}"


@dataclass(frozen=True)
class SimulationSpec:
    """Configuration of one Monte Carlo study.

    ``kind`` selects the study:

    ``estimation``
        scaled error ``sqrt(nT) ||b - beta||`` of the private estimator at each
        budget in ``mu_values`` and of pooled OLS.
    ``inference``
        coverage, width and Wald size of the private intervals for each
        ``(mu_est, mu_var)`` in ``budgets``, plus clustered and classical
        pooled-OLS intervals.
    ``two_group``
        size of private z-tests of ``theta = 0`` with half the users treated.
    """

    kind: str = "estimation"
    grid: tuple[tuple[int, int], ...] = ((300, 10),)
    mu_values: tuple[float, ...] = (1.0, math.inf)
    budgets: tuple[tuple[float, float], ...] = ((1.0, 1.0), (math.inf, math.inf))
    B: float = 100.0
    R: int = 10
    xi: float = 1e-5
    replications: int = 500
    base_seed: int = 20240601
    d: int = 4
    alpha: float = 0.05
    beta: tuple[float, ...] | None = None
    covariate_mean_sd: float = 3.0
    init: str = "stationary"
    group_fraction: float = 0.5
    theta: tuple[float, ...] | None = None
    correction: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"kind must be one of {KINDS}, got {self.kind!r}")
        grid = tuple((int(n), int(T)) for n, T in self.grid)
        if not grid:
            raise InvalidInputError("grid must contain at least one (n, T) cell")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "mu_values", tuple(_mu(m) for m in self.mu_values))
        object.__setattr__(self, "budgets", tuple((_mu(a), _mu(b)) for a, b in self.budgets))
        if self.replications < 1:
            raise InvalidInputError("replications must be >= 1")
        for name in ("beta", "theta"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(float(x) for x in v))
        # validates B, R and xi
        TrimMeanConfig(1.0, self.B, self.R, self.xi)

    @classmethod
    def from_dict(cls, cfg: dict) -> "SimulationSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(cfg) - known
        if extra:
            raise InvalidInputError(f"unknown config keys: {sorted(extra)}")
        return cls(**cfg)

    @classmethod
    def from_json(cls, path) -> "SimulationSpec":
        with open(path) as fh:
            try:
                cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON config: {exc.msg}", exc.lineno) from None
        return cls.from_dict(cfg)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["grid"] = [list(c) for c in self.grid]
        out["mu_values"] = [_mu_json(m) for m in self.mu_values]
        out["budgets"] = [[_mu_json(a), _mu_json(b)] for a, b in self.budgets]
        for name in ("beta", "theta"):
            if out[name] is not None:
                out[name] = list(out[name])
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def model(self, n: int, T: int) -> SimModel:
        grouped = self.kind == "two_group"
        return SimModel(
            n=n, T=T, d=self.d, beta=self.beta, covariate_mean_sd=self.covariate_mean_sd,
            group_fraction=self.group_fraction if grouped else None,
            theta=self.theta if grouped else None, init=self.init,
        )

    def methods(self) -> list[str]:
        if self.kind == "estimation":
            return [f"dp_mu{_label(m)}" for m in self.mu_values] + ["pooled_ols"]
        if self.kind == "inference":
            return [f"dp_est{_label(a)}_var{_label(b)}" for a, b in self.budgets] + [
                "ols_clustered", "ols_classical"]
        return [f"dp_two_group_est{_label(a)}_var{_label(b)}" for a, b in self.budgets]


@dataclass(frozen=True)
class TableRow:
    n: int
    T: int
    method: str
    metric: str
    value: float
    mc_se: float
    config_hash: str


def _interval_metrics(point, V, truth, q) -> dict:
    se = np.sqrt(np.clip(np.diag(V), 0.0, None))
    covered = np.abs(point - truth) <= q * se
    try:
        pivot = inv_sqrt_psd(V) @ (point - truth)
    except DegenerateCovarianceError:
        pivot = np.full(point.shape[0], math.nan)
    return {"coverage": covered.mean(), "width": 2.0 * q * se.mean(), "pivot": pivot}


def _wald_reject(point, V, truth, alpha) -> float:
    d = point.shape[0]
    return float(wald_test(point, V, np.eye(d), truth).p_value < alpha)


def replicate(spec: SimulationSpec, n: int, T: int, rep: int) -> dict[str, dict]:
    """Run every method of ``spec`` on replication ``rep`` of cell ``(n, T)``.

    Returns ``{method: {metric: value}}``. Scalar metrics are floats; the
    ``pivot`` entry of interval methods is ``V^{-1/2} (estimate - truth)``.
    A method that raises a package error reports ``failed = 1.0`` and NaN
    metrics.
    """
    X, Y, truth = gen_arrays(spec.model(n, T), make_rng(spec.base_seed, n, T, rep, 0))
    fits = local_fits_balanced(X, Y, truth.z)
    q = float(std_normal_quantile(1.0 - spec.alpha / 2.0))
    out: dict[str, dict] = {}
    names = spec.methods()

    if spec.kind == "estimation":
        scale = math.sqrt(n * T)
        for k, mu in enumerate(spec.mu_values):
            rng = make_rng(spec.base_seed, n, T, rep, k + 1)
            try:
                res, _ = dp_beta(None, TrimMeanConfig(mu, spec.B, spec.R, spec.xi), rng, fits)
                out[names[k]] = {"scaled_rmse": scale * float(np.linalg.norm(res.m_dp - truth.beta)),
                                 "failed": 0.0}
            except GDPPanelError:
                out[names[k]] = {"scaled_rmse": math.nan, "failed": 1.0}
        ols = pooled_ols_arrays(X.reshape(-1, spec.d), Y.reshape(-1), np.arange(0, n * T, T))
        out["pooled_ols"] = {"scaled_rmse": scale * float(np.linalg.norm(ols.beta - truth.beta)),
                             "failed": 0.0}
        return out

    if spec.kind == "inference":
        for k, (mu_est, mu_var) in enumerate(spec.budgets):
            rng = make_rng(spec.base_seed, n, T, rep, k + 1)
            try:
                res, _ = dp_beta(None, TrimMeanConfig(mu_est, spec.B, spec.R, spec.xi), rng, fits)
                cov = dp_covariance(fits, res, mu_var, rng, correction=spec.correction)
                m = _interval_metrics(res.m_dp, cov.V, truth.beta, q)
                m["wald_rejection"] = _wald_reject(res.m_dp, cov.V, truth.beta, spec.alpha)
                m["failed"] = 0.0
            except GDPPanelError:
                m = {"coverage": math.nan, "width": math.nan, "pivot": np.full(spec.d, math.nan),
                     "wald_rejection": math.nan, "failed": 1.0}
            out[names[k]] = m
        ols = pooled_ols_arrays(X.reshape(-1, spec.d), Y.reshape(-1), np.arange(0, n * T, T))
        for name, V in (("ols_clustered", ols.clustered_cov), ("ols_classical", ols.classical_cov)):
            m = _interval_metrics(ols.beta, V, truth.beta, q)
            m["wald_rejection"] = _wald_reject(ols.beta, V, truth.beta, spec.alpha)
            m["failed"] = 0.0
            out[name] = m
        return out

    z = truth.z
    for k, (mu_est, mu_var) in enumerate(spec.budgets):
        rng = make_rng(spec.base_seed, n, T, rep, k + 1)
        try:
            res, _ = dp_theta_two_group(None, TrimMeanConfig(mu_est, spec.B, spec.R, spec.xi), rng, fits)
            arm_var = mu_var / math.sqrt(2.0)
            c1 = dp_covariance_grouped(fits, z, res.arm1, arm_var, rng, correction=spec.correction)
            c0 = dp_covariance_grouped(fits, 1 - z, res.arm0, arm_var, rng, correction=spec.correction)
            cov = combine_two_group(c1, c0)
            m = _interval_metrics(res.diff, cov.V, truth.theta, q)
            se = np.sqrt(np.clip(np.diag(cov.V), 0.0, None))
            # per-coordinate z-tests of theta_j = 0
            m["rejection_rate"] = float(np.mean(np.abs(res.diff) > q * se))
            m["wald_rejection"] = _wald_reject(res.diff, cov.V, np.zeros(spec.d), spec.alpha)
            m["failed"] = 0.0
        except GDPPanelError:
            m = {"coverage": math.nan, "width": math.nan, "pivot": np.full(spec.d, math.nan),
                 "rejection_rate": math.nan, "wald_rejection": math.nan, "failed": 1.0}
        out[names[k]] = m
    return out


def _task(args):
    spec, n, T, rep = args
    return replicate(spec, n, T, rep)


def run_replications(spec: SimulationSpec, n: int, T: int, threads: int = 1) -> list[dict]:
    """All replications of one cell, in replication order."""
    tasks = [(spec, n, T, rep) for rep in range(spec.replications)]
    if threads <= 1:
        return [_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(_task, tasks, chunksize=max(1, len(tasks) // (8 * threads))))


def _summarize(values: np.ndarray) -> tuple[float, float]:
    ok = values[~np.isnan(values)]
    if ok.size == 0:
        return math.nan, math.nan
    mean = math.fsum(ok) / ok.size
    se = float(np.std(ok, ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else math.nan
    return mean, se


def run_simulation(spec: SimulationSpec, threads: int = 1, keep_raw: bool = False):
    """Run the study and return its table rows (and raw results if requested).

    Returns
    -------
    rows : list of TableRow
    raw : dict, optional
        ``{(n, T): [per-replication results]}`` when ``keep_raw`` is set.
    """
    h = spec.config_hash()
    rows: list[TableRow] = []
    raw = {}
    for n, T in spec.grid:
        results = run_replications(spec, n, T, threads)
        if keep_raw:
            raw[(n, T)] = results
        for method in spec.methods():
            metrics = [k for k in results[0][method] if k not in ("pivot", "failed")]
            for metric in metrics:
                vals = np.array([r[method][metric] for r in results], dtype=float)
                mean, se = _summarize(vals)
                rows.append(TableRow(n, T, method, metric, mean, se, h))
            fails = np.array([r[method]["failed"] for r in results])
            rows.append(TableRow(n, T, method, "failure_rate", float(fails.mean()),
                                 float(np.std(fails, ddof=1) / math.sqrt(fails.size)) if fails.size > 1 else math.nan, h))
    return (rows, raw) if keep_raw else rows


def write_table(rows: list[TableRow], spec: SimulationSpec, out) -> Path:
    """Write ``rows`` as CSV and the exact config next to it as ``<out>.config.json``."""
    out = Path(out)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([r.n, r.T, r.method, r.metric, repr(r.value), repr(r.mc_se), r.config_hash])
    side = out.with_name(out.name + ".config.json")
    with open(side, "w") as fh:
        json.dump({"config_hash": spec.config_hash(), "config": spec.to_dict()}, fh, indent=2, sort_keys=True)
    return side
