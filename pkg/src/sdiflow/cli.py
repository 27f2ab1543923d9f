"""Command line: ``sdiflow simulate|sweep|tikhonov-curve <config.yaml>``.

Exit codes: 0 when every verdict passes, 2 on verdict failures or diverged
paths, 1 on errors (bad config, solver failure, asserted tuning violated).
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys

from . import analysis
from .config import load_config, parse_config
from .errors import ConfigError, ContractError, SolverError, QuadratureError
from .experiment import (EXIT_ERROR, EXIT_OK, EXIT_VERDICT, admissibility, resolve_output_dir,
                         run_experiment)
from .integrator import format_float

log = logging.getLogger("sdiflow")

SWEEP_PARAMS = ("r", "alpha", "sigma_star", "h", "n_paths", "p")
SWEEP_COLUMNS = ("point", "observable", "fitted", "stderr", "predicted", "verdict", "strict_tuning",
                 "n_diverged", "terminal_error", "exit_code", "error")


def _apply_overrides(cfg, seed=None, sweep_point=()):
    """Rebuild the config with ``--seed`` and sweep values; re-validated through the parser."""
    data = cfg.to_dict()
    if seed is not None:
        data["ensemble"]["base_seed"] = int(seed)
    for name, value in sweep_point:
        if name == "r":
            data["tikhonov"]["r"] = value
        elif name == "alpha":
            data["noise"]["alpha"] = value
        elif name == "sigma_star":
            data["noise"]["sigma_star"] = value
        elif name == "h":
            data["integrator"]["h"] = value
        elif name == "n_paths":
            data["ensemble"]["n_paths"] = int(value)
        elif name == "p":
            data["problem"].setdefault("params", {})["p"] = value
    return parse_config(data)


def _strict_tuning_error(cfg):
    """Message when strict tuning is asserted but violated, else None."""
    if not cfg.analysis.assert_strict_tuning:
        return None
    report = admissibility(cfg, cfg.build_problem())
    if report is None:
        return "strict tuning asserted but the problem has no error-bound exponent p"
    if cfg.tikhonov.kind == "off":
        return "strict tuning asserted but the Tikhonov schedule is off"
    if not report.strict_tuning:
        return "admissibility failure: " + "; ".join(m for m in report.messages if "strict tuning" in m)
    return None


def _report(result, outdir):
    for f in result.fits:
        fit = f.fit
        pred = "none" if fit.predicted_exponent is None else f"{fit.predicted_exponent:+.4f}"
        extra = f" ({f.error})" if f.error else ""
        print(f"{fit.observable:>14s}: fitted {fit.fitted_exponent:+.4f} +- {fit.stderr:.4f}, "
              f"predicted {pred}, {'fail' if f.error else fit.verdict}{extra}")
    for name, b in result.bounds.items():
        print(f"{name:>14s}: {'pass' if b.passed else 'fail'} ({b.n_violations} violations)")
    if result.stats.n_diverged:
        print(f"{result.stats.n_diverged} of {result.stats.n_paths} paths diverged")
    print(f"outputs in {outdir}")


def cmd_simulate(args):
    cfg = _apply_overrides(load_config(args.config), args.seed)
    msg = _strict_tuning_error(cfg)
    if msg:
        print(msg, file=sys.stderr)
        return EXIT_ERROR
    outdir = resolve_output_dir(cfg, args.config, args.output)
    result = run_experiment(cfg, threads=args.threads)
    result.write(outdir)
    _report(result, outdir)
    return result.exit_code


def _parse_values(text, name):
    out = []
    for item in text.replace(",", " ").split():
        try:
            out.append(float(item))
        except ValueError:
            raise ConfigError(f"--values[{name}]", f"not a number: {item!r}") from None
    if not out:
        raise ConfigError(f"--values[{name}]", "empty value list")
    return out


def _point_label(point):
    return "_".join(f"{k}={v:g}" for k, v in point)


def cmd_sweep(args):
    base = _apply_overrides(load_config(args.config), args.seed)
    if len(args.param) != len(args.values):
        raise ConfigError("--param", "give one --values list per --param")
    for name in args.param:
        if name not in SWEEP_PARAMS:
            raise ConfigError("--param", f"must be one of {list(SWEEP_PARAMS)}, got {name!r}")
    axes = [[(n, v) for v in _parse_values(vals, n)] for n, vals in zip(args.param, args.values)]
    root = resolve_output_dir(base, args.config, args.output)
    os.makedirs(root, exist_ok=True)
    rows = []
    codes = set()
    for idx, point in enumerate(itertools.product(*axes)):
        label = f"point_{idx:03d}_{_point_label(point)}"
        values = [format_float(v) for _, v in point]
        common = dict(strict="", n_div="", term="", code="", err="")
        fit_rows = []
        try:
            cfg = _apply_overrides(base, None, point)
            problem = cfg.build_problem()
            report = admissibility(cfg, problem)
            common["strict"] = "" if report is None else str(report.strict_tuning).lower()
            msg = _strict_tuning_error(cfg)
            if msg:
                raise ContractError(msg)
            result = run_experiment(cfg, threads=args.threads)
            result.write(os.path.join(root, label))
            code = result.exit_code
            common.update(n_div=str(result.stats.n_diverged), term=format_float(result.terminal_error),
                          code=str(code))
            fit_rows = [f.row() for f in result.fits]
        except (ConfigError, ContractError, SolverError, QuadratureError) as exc:
            code = EXIT_ERROR
            common.update(code=str(code), err=str(exc))
            print(f"{label}: error: {exc}", file=sys.stderr)
        codes.add(code)
        if not fit_rows:
            fit_rows = [["", "", "", "", "", ""]]
        for fr in fit_rows:
            obs, _, _, fitted, se, pred, verdict = fr if len(fr) == 7 else [""] * 7
            rows.append([label] + values + [obs, fitted, se, pred, verdict, common["strict"],
                                            common["n_div"], common["term"], common["code"], common["err"]])
        print(f"{label}: exit {code}")
    header = [SWEEP_COLUMNS[0], *args.param, *SWEEP_COLUMNS[1:]]
    path = os.path.join(root, "sweep_summary.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"sweep summary in {path}")
    # an erroring point outranks verdict failures elsewhere in the sweep
    for code in (EXIT_ERROR, EXIT_VERDICT):
        if code in codes:
            return code
    return EXIT_OK


def cmd_tikhonov_curve(args):
    cfg = _apply_overrides(load_config(args.config), args.seed)
    problem = cfg.build_problem()
    grid = cfg.analysis.eps_grid or analysis.DEFAULT_EPS_GRID
    report = analysis.tikhonov_curve_study(problem, grid)
    outdir = resolve_output_dir(cfg, args.config, args.output)
    os.makedirs(outdir, exist_ok=True)
    report.to_csv(os.path.join(outdir, "tikhonov_curve.csv"))
    summary = report.summary()
    summary = {k: (None if isinstance(v, float) and v != v else v) for k, v in summary.items()}
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump({"config": cfg.to_dict(), "tikhonov_curve": summary}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    slope = "n/a" if report.degenerate else f"{report.slope:.4f}"
    print(f"slope {slope} (threshold {report.threshold:.4f}), browder {'ok' if report.browder_ok else 'violated'}"
          f", verdict {report.verdict}")
    print(f"outputs in {outdir}")
    return EXIT_OK if report.passed else EXIT_VERDICT


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads for path simulation (default: CPU count)")
    common.add_argument("--output", default=None, help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, default=None, help="base seed (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sdiflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", parents=[common], help="run an ensemble and fit rates")
    p.add_argument("config")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("sweep", parents=[common], help="Cartesian parameter sweep")
    p.add_argument("config")
    p.add_argument("--param", action="append", default=[], help=f"one of {', '.join(SWEEP_PARAMS)}")
    p.add_argument("--values", action="append", default=[], help="comma-separated values")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("tikhonov-curve", parents=[common], help="Tikhonov curve study")
    p.add_argument("config")
    p.set_defaults(func=cmd_tikhonov_curve)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
    except (ContractError, SolverError, QuadratureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
