"""Command line entry point ``gdppanel``.

Exit codes: 0 success, 2 parse or input error, 3 insufficient users,
4 degenerate covariance.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .dpcore import make_rng
from .errors import (DegenerateCovarianceError, GDPPanelError, InsufficientUsersError,
                     InvalidInputError, ParseError)
from .harness.fit import FitOptions, format_fit, format_trimmean, run_fit
from .harness.io import (CampLikeModel, camp_like_panel, load_panel_csv, load_vectors_csv,
                         save_vectors_csv, within_demean, write_panel_csv)
from .harness.simulate import SimulationSpec, run_simulation, write_table
from .regression import thresholds
from .trimmean import TrimMeanConfig, dp_trim_mean

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INSUFFICIENT = 3
EXIT_DEGENERATE = 4

TABLE1_GRID = [(n, T) for n in (300, 600, 1200, 2400) for T in (10, 40, 160)]
TABLE2_GRID = [(n, 15) for n in (300, 600, 1200, 2400, 4800)]


def _budget(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if math.isnan(v) or v <= 0:
        raise argparse.ArgumentTypeError("budgets must be > 0 (use 'inf' for no privacy)")
    return v


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    sys.stdout.write(text)


def _common(p: argparse.ArgumentParser, B: float, R: int, xi: float) -> None:
    p.add_argument("--mu", type=_budget, default=1.0, help="GDP budget of the estimate ('inf' = none)")
    p.add_argument("--B", type=float, default=B, help="initial radius")
    p.add_argument("--R", type=int, default=R, help="number of halving rounds")
    p.add_argument("--xi", type=float, default=xi, help="failure probability")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-privacy", action="store_true", help="same as --mu inf (and --mu-var inf)")


def cmd_trimmean(args) -> int:
    data = load_vectors_csv(args.input)
    mu = math.inf if args.no_privacy else args.mu
    out = dp_trim_mean(data, TrimMeanConfig(mu, args.B, args.R, args.xi), make_rng(args.seed))
    _emit(format_trimmean(out), args.out)
    return EXIT_OK


def cmd_fit(args) -> int:
    panel = load_panel_csv(args.input)
    if args.demean:
        panel = within_demean(panel)
    mu, mu_var = args.mu, args.mu_var
    if args.no_privacy:
        mu = math.inf
        mu_var = None if mu_var is None else math.inf
    if args.two_group and not panel.has_groups:
        raise InvalidInputError("--two-group needs a z column in the input")
    opts = FitOptions(mu=mu, mu_var=mu_var, B=args.B, R=args.R, xi=args.xi,
                      two_group=args.two_group, correction=not args.no_correction,
                      alpha=args.alpha, summary_stats=args.summary_stats or args.raw_gram,
                      raw_gram=args.raw_gram)
    report = run_fit(panel, opts, make_rng(args.seed))
    _emit(format_fit(report), args.out)
    return EXIT_OK


def _load_spec(args, kind: str) -> SimulationSpec:
    if args.config:
        with open(args.config) as fh:
            try:
                cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON config: {exc.msg}", exc.lineno) from None
    else:
        cfg = {}
    cfg.setdefault("kind", kind)
    if cfg["kind"] != kind:
        raise InvalidInputError(f"config kind {cfg['kind']!r} does not match subcommand {kind!r}")
    if kind == "estimation":
        cfg.setdefault("grid", TABLE1_GRID)
        cfg.setdefault("replications", 500)
    elif kind == "inference":
        cfg.setdefault("grid", TABLE2_GRID)
        cfg.setdefault("replications", 2000)
    else:
        cfg.setdefault("grid", [(4800, 15)])
        cfg.setdefault("replications", 2000)
    if args.reps is not None:
        cfg["replications"] = args.reps
    if args.seed is not None:
        cfg["base_seed"] = args.seed
    for key in ("B", "R", "xi"):
        v = getattr(args, key)
        if v is not None:
            cfg[key] = v
    if args.mu is not None:
        if kind == "estimation":
            cfg["mu_values"] = [args.mu, "inf"]
        else:
            mv = args.mu_var if args.mu_var is not None else args.mu
            cfg["budgets"] = [[args.mu, mv], ["inf", "inf"]]
    if args.no_correction:
        cfg["correction"] = False
    return SimulationSpec.from_dict(cfg)


def cmd_simulate(args) -> int:
    spec = _load_spec(args, args.study.replace("-", "_"))
    rows = run_simulation(spec, threads=args.threads)
    if args.out:
        write_table(rows, spec, args.out)
    w = sys.stdout
    w.write("n,T,method,metric,value,mc_se,config_hash\n")
    for r in rows:
        w.write(f"{r.n},{r.T},{r.method},{r.metric},{r.value:.6g},{r.mc_se:.3g},{r.config_hash}\n")
    return EXIT_OK


def cmd_thresholds(args) -> int:
    rep = thresholds(args.n, args.T, args.d, args.mu, args.xi, args.R, args.B,
                     beta_norm_guess=args.beta_norm, constants=tuple(args.constants))
    text = json.dumps(rep.as_dict(), indent=2, default=float) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_make_data(args) -> int:
    rng = make_rng(args.seed)
    if args.kind == "camp":
        panel, days = camp_like_panel(CampLikeModel(n=args.n, effect=args.effect), rng)
        write_panel_csv(panel, args.out, t_values=days)
    elif args.kind == "panel":
        from .datagen import SimModel, gen_panel

        model = SimModel(n=args.n, T=args.T, d=args.d,
                         group_fraction=0.5 if args.groups else None)
        panel, truth = gen_panel(model, rng)
        write_panel_csv(panel, args.out)
        sys.stdout.write("beta: " + " ".join(repr(float(b)) for b in truth.beta) + "\n")
    else:
        data = np.array([50.0, 50.0]) + math.sqrt(10.0) * rng.standard_normal((args.n, 2))
        save_vectors_csv(data, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gdppanel",
        description="User-level Gaussian-DP estimation and inference for panel regression.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trimmean", help="private trimmed mean of vectors in a CSV")
    p.add_argument("--input", required=True, help="CSV with one vector per row")
    p.add_argument("--out", help="also write the report here")
    _common(p, B=100.0, R=10, xi=1e-5)
    p.set_defaults(func=cmd_trimmean)

    p = sub.add_parser("fit", help="private regression fit of a panel CSV")
    p.add_argument("--input", required=True, help="CSV with header user_id,t,y,x1..xd[,z]")
    p.add_argument("--out", help="also write the report here")
    _common(p, B=100.0, R=10, xi=1e-5)
    p.add_argument("--mu-var", type=_budget, default=None, help="budget of the covariance estimate")
    p.add_argument("--two-group", action="store_true", help="estimate the z=1 minus z=0 difference")
    p.add_argument("--no-correction", action="store_true", help="omit the (B*)^2 I term")
    p.add_argument("--summary-stats", action="store_true",
                   help="also run the baseline that privatizes X'X and X'Y")
    p.add_argument("--raw-gram", action="store_true",
                   help="baseline uses raw X_i'X_i instead of X_i'X_i / T_i (implies --summary-stats)")
    p.add_argument("--demean", action="store_true", help="subtract per-user means first")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="Monte Carlo studies")
    p.add_argument("study", choices=["estimation", "inference", "two-group"])
    p.add_argument("--config", help="JSON SimulationSpec; flags below override it")
    p.add_argument("--out", help="CSV output (config written to <out>.config.json)")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--mu", type=_budget, default=None)
    p.add_argument("--mu-var", type=_budget, default=None)
    p.add_argument("--B", type=float, default=None)
    p.add_argument("--R", type=int, default=None)
    p.add_argument("--xi", type=float, default=None)
    p.add_argument("--no-correction", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("thresholds", help="advisory n, T, R and B thresholds")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--mu", type=_budget, default=1.0)
    p.add_argument("--xi", type=float, default=1e-5)
    p.add_argument("--R", type=int, default=10)
    p.add_argument("--B", type=float, default=100.0)
    p.add_argument("--beta-norm", type=float, default=0.0)
    p.add_argument("--constants", type=float, nargs=4, default=[1.0, 1.0, 1.0, 1.0],
                   metavar=("C1", "C2", "C3", "C4"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("make-data", help="write a synthetic input file")
    p.add_argument("kind", choices=["panel", "camp", "cluster"])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--T", type=int, default=15)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--groups", action="store_true")
    p.add_argument("--effect", type=float, default=0.0)
    p.set_defaults(func=cmd_make_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "make-data" and args.n is None:
        args.n = {"camp": 695, "panel": 300, "cluster": 300}[args.kind]
    try:
        return args.func(args)
    except InsufficientUsersError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except DegenerateCovarianceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (InvalidInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except GDPPanelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
