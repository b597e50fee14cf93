"""Command-line interface.

Every command writes one structured result (JSON, or CSV for tables) to
``--out`` and, unless ``--no-figures`` is given, PNG figures next to it.
"""

import argparse
import logging
import os
import sys
from dataclasses import asdict

import numpy as np

from . import io as pio
from .fit import ModelSpec, RankDeficiencyError, default_bases, fit_penalized, kkt_check
from .multi import MultiTauSpec, fit_group_path, fit_group_penalized
from .penalties import PenaltySpec
from .sim import (ERROR_MODELS, SimConfig, qq_diagnostic, qq_max_deviation, rate_check,
                  run_multi_simulation, run_simulation)
from .splines import DegenerateKnotsError, DomainError
from .tuning import DegenerateGridError, fit_path

log = logging.getLogger("plaqr")

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_RANK = 3
EXIT_NONCONVERGENCE = 4

COMMANDS = ("fit", "path", "multifit", "simulate", "ratecheck", "qqdiag")
METRIC_COLUMNS = ("FV", "TV", "True", "P", "AADE", "MSE")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="plaqr",
        description="Penalized partially linear additive quantile regression.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output file (.json or .csv)")
    common.add_argument("--format", choices=("json", "csv"), default=None,
                        help="output format (default: from --out suffix, else json)")
    common.add_argument("--seed", type=int, default=20240601)
    common.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", required=True, help="CSV file with a header row")
    data.add_argument("--response", required=True)
    data.add_argument("--linear", default="", help="comma-separated linear columns")
    data.add_argument("--nonlinear", default="", help="comma-separated nonlinear columns")
    data.add_argument("--order", type=int, default=4, help="spline order (degree + 1)")
    data.add_argument("--knots", type=int, default=None,
                      help="internal knots per coordinate (default floor(n^0.2))")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--penalty", choices=("scad", "mcp", "lasso"), default="scad")
    model.add_argument("--a", type=float, default=None, help="SCAD/MCP shape parameter")
    grid = model.add_mutually_exclusive_group()
    grid.add_argument("--lambda", dest="lam", type=float, default=None,
                      help="fit at a single lambda")
    grid.add_argument("--auto-grid", type=int, default=50, metavar="N",
                      help="select lambda from an N-point grid (default 50)")
    model.add_argument("--criterion", choices=("qbic", "cv"), default="qbic")

    p = sub.add_parser("fit", parents=[common, data, model], help="fit one quantile level")
    p.add_argument("--tau", type=float, default=0.5)

    p = sub.add_parser("path", parents=[common, data, model], help="full lambda path")
    p.add_argument("--tau", type=float, default=0.5)

    p = sub.add_parser("multifit", parents=[common, data, model],
                       help="group-penalized fit at several quantile levels")
    p.add_argument("--taus", type=_floats, required=True, help="e.g. 0.5,0.7,0.9")

    p = sub.add_parser("simulate", parents=[common, model], help="Monte Carlo benchmark")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--p", type=int, default=100)
    p.add_argument("--error", choices=ERROR_MODELS, default="gaussian")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--taus", type=_floats, default=None,
                   help="several levels: compare the group fit with separate fits")
    p.add_argument("--reps", type=int, default=50)

    p = sub.add_parser("ratecheck", parents=[common], help="oracle error against n")
    p.add_argument("--ns", type=_ints, default=[200, 400, 800, 1600])
    p.add_argument("--p", type=int, default=100)
    p.add_argument("--error", choices=ERROR_MODELS, default="gaussian")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--reps", type=int, default=50)

    p = sub.add_parser("qqdiag", parents=[common, data, model],
                       help="simulation-based QQ lack-of-fit diagnostic")
    p.add_argument("--taus", type=_floats, default=[round(t, 2) for t in np.linspace(0.1, 0.9, 9)])
    p.add_argument("--draws", type=int, default=10000)
    return parser


def _format(args):
    if args.format:
        return args.format
    return "csv" if str(args.out).lower().endswith(".csv") else "json"


def _figure_path(args, suffix):
    stem, _ = os.path.splitext(args.out)
    return f"{stem}_{suffix}.png"


def _spec(args, tau):
    ds = pio.load_csv(args.input, args.response, args.linear, args.nonlinear)
    if ds.n_dropped:
        print(f"warning: dropped {ds.n_dropped} row(s) with missing values", file=sys.stderr)
    bases = default_bases(ds.Z, order=args.order, k_n=args.knots) if ds.Z.shape[1] else ()
    pen = PenaltySpec(args.penalty, 0.0, args.a)
    return ds, ModelSpec(ds.y, ds.X, ds.Z, tau, bases, pen)


def _fit_one(args, spec):
    if args.lam is not None:
        return fit_penalized(spec, args.lam), None
    path = fit_path(spec, n_lambda=args.auto_grid, criterion=args.criterion, seed=args.seed,
                    check_kkt=False)
    fit = path.selected
    object.__setattr__(fit, "kkt_report", kkt_check(spec, fit))
    return fit, path


def _path_rows(path):
    return [{"lambda": lam, "score": s, "active_size": int(f.active_set.size),
             "n_interpolated": int(f.n_interpolated)}
            for lam, s, f in zip(path.lambdas, path.scores, path.fits)]


def _write(args, payload, rows=None, columns=None):
    if _format(args) == "csv":
        pio.write_csv(rows if rows is not None else [payload], args.out, columns)
    else:
        pio.write_json(payload, args.out)


def cmd_fit(args, keep_path=False):
    ds, spec = _spec(args, args.tau)
    fit, path = _fit_one(args, spec)
    result = {"command": args.command, "response": ds.response, "n": spec.n,
              "n_dropped": ds.n_dropped, "penalty": args.penalty, "a": spec.penalty.a,
              "rescale": {name: {"min": r.lo, "max": r.hi} for name, r in zip(ds.nonlinear, ds.rescale)},
              "fit": pio.fit_to_dict(fit, list(ds.linear), ds.nonlinear, ds.rescale)}
    rows = None
    if path is not None:
        result["criterion"] = path.criterion
        result["selected_lambda"] = path.selected_lambda
        if keep_path:
            result["path"] = _path_rows(path)
            rows = result["path"]
    if args.command == "fit" and _format(args) == "csv":
        rows = [{"name": n, "beta": b} for n, b in zip(ds.linear, fit.beta)]
    _write(args, result, rows)
    if not args.no_figures:
        from .plotting import plot_components, plot_path
        if ds.nonlinear:
            plot_components(result["fit"]["g_grid"], _figure_path(args, "g"))
        if path is not None:
            plot_path(path.lambdas, path.scores, path.active_sizes(), _figure_path(args, "path"),
                      path.selected_index, path.criterion.upper())
    return _exit_status([fit])


def cmd_path(args):
    return cmd_fit(args, keep_path=True)


def cmd_multifit(args):
    ds, spec = _spec(args, args.taus[0])
    mspec = MultiTauSpec(spec.y, spec.X, spec.Z, tuple(args.taus), spec.bases, spec.penalty)
    path = None
    if args.lam is not None:
        mfit = fit_group_penalized(mspec, args.lam)
    else:
        path = fit_group_path(mspec, n_lambda=args.auto_grid)
        mfit = path.selected
    names = list(ds.linear)
    result = {"command": "multifit", "taus": list(mspec.taus), "lambda": mfit.lam,
              "group_active_set": [names[j] for j in mfit.group_active_set],
              "group_norms": mfit.group_norms,
              "fits": [pio.fit_to_dict(f, names, ds.nonlinear, ds.rescale) for f in mfit.fits]}
    if path is not None:
        result["path"] = _path_rows(path)
    rows = [dict({"name": n}, **{f"beta_tau{t:g}": b for t, b in zip(mspec.taus, col)})
            for n, col in zip(names, mfit.beta_by_tau.T)]
    _write(args, result, rows)
    if not args.no_figures and ds.nonlinear:
        from .plotting import plot_components
        for t, f in zip(mspec.taus, result["fits"]):
            plot_components(f["g_grid"], _figure_path(args, f"g_tau{t:g}"))
    return _exit_status(mfit.fits)


def cmd_simulate(args):
    a = args.a
    if args.taus:
        cfg = SimConfig(n=args.n, p=args.p, error_model=args.error, tau=args.taus[0],
                        n_reps=args.reps, seed=args.seed)
        reports, _ = run_multi_simulation(cfg, tuple(args.taus), n_lambda=args.auto_grid)
        rows = [dict({"method": name}, **{k: rep.as_row().get(k) for k in ("FV", "TV", "True", "L2_error")})
                for name, rep in reports.items()]
        payload = {"command": "simulate", "config": asdict(cfg), "taus": args.taus,
                   "results": {k: v.to_dict() for k, v in reports.items()}}
        _write(args, payload, rows, ("method", "FV", "TV", "True", "L2_error"))
        return EXIT_OK
    cfg = SimConfig(n=args.n, p=args.p, error_model=args.error, tau=args.tau,
                    n_reps=args.reps, seed=args.seed)
    report, records = run_simulation(cfg, family=args.penalty, criterion=args.criterion,
                                     n_lambda=args.auto_grid, a=a)
    payload = {"command": "simulate", "config": asdict(cfg), "penalty": args.penalty,
               "criterion": args.criterion, "metrics": report.as_row(),
               "kkt_ok_fraction": float(np.mean([r["kkt"]["ok"] for r in records if "kkt" in r]))}
    _write(args, payload, [report.as_row()], METRIC_COLUMNS)
    return EXIT_OK


def cmd_ratecheck(args):
    cfg = SimConfig(n=max(args.ns), p=args.p, error_model=args.error, tau=args.tau,
                    n_reps=args.reps, seed=args.seed)
    rows, slope = rate_check(args.ns, cfg)
    table = [{"n": int(n), "mse_beta": m, "mse_g": g} for n, m, g in rows]
    _write(args, {"command": "ratecheck", "rows": table, "slope": slope}, table)
    if not args.no_figures:
        from .plotting import plot_rate
        plot_rate(rows, _figure_path(args, "rate"))
    return EXIT_OK


def cmd_qqdiag(args):
    taus = sorted(args.taus)
    ds, spec = _spec(args, taus[0])
    fits = {}
    for t in taus:
        fits[t], _ = _fit_one(args, spec.at_tau(t))
    table = qq_diagnostic(fits, spec.y, args.draws, np.random.default_rng(args.seed))
    dev, iqr = qq_max_deviation(table, taus[0], taus[-1])
    rows = [{"prob": a, "simulated": b, "observed": c} for a, b, c in table]
    _write(args, {"command": "qqdiag", "taus": taus, "max_deviation": dev, "iqr": iqr,
                  "table": rows}, rows)
    if not args.no_figures:
        from .plotting import plot_qq
        plot_qq(table, _figure_path(args, "qq"))
    return _exit_status(list(fits.values()))


def _exit_status(fits):
    if any(f.status == "degenerate" for f in fits):
        return EXIT_RANK
    if any(not f.converged or f.status == "max_iter" for f in fits):
        return EXIT_NONCONVERGENCE
    return EXIT_OK


HANDLERS = {"fit": cmd_fit, "path": cmd_path, "multifit": cmd_multifit,
            "simulate": cmd_simulate, "ratecheck": cmd_ratecheck, "qqdiag": cmd_qqdiag}


def run(argv=None):
    """Parse ``argv`` and run the command; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    try:
        return HANDLERS[args.command](args)
    except (pio.ParseError, pio.DegenerateColumnError, DomainError, DegenerateKnotsError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (RankDeficiencyError, DegenerateGridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RANK


def main():
    sys.exit(run())
