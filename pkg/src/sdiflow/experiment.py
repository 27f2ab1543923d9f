"""Run a configured experiment and write its reports (used by the command line)."""
from __future__ import annotations

import dataclasses
import json
import math
import os

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from . import analysis
from .errors import FitError
from .montecarlo import (check_bound, convex_ergodic_bound, jensen_check, run_ensemble,
                         strongly_convex_bound)
from .schedules import check_admissibility, epsilon

EXIT_OK, EXIT_ERROR, EXIT_VERDICT = 0, 1, 2
OUTPUT_ROOT_ENV = "SDIFLOW_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"


def resolve_output_dir(cfg, config_path=None, override=None):
    """``--output`` wins; otherwise ``$SDIFLOW_OUTPUT_ROOT/<config output or config stem>``."""
    if override:
        return override
    root = os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT)
    if cfg.output:
        return cfg.output if os.path.isabs(cfg.output) else os.path.join(root, cfg.output)
    stem = os.path.splitext(os.path.basename(config_path))[0] if config_path else "experiment"
    return os.path.join(root, stem)


def admissibility(cfg, problem):
    if problem.p is None:
        return None
    return check_admissibility(cfg.tikhonov, cfg.noise, problem)


def _default_tolerance(cfg):
    return analysis.DETERMINISTIC_TOL if cfg.noise.sigma_star == 0 else analysis.STOCHASTIC_TOL


@dataclasses.dataclass
class FitOutcome:
    fit: analysis.RateFit
    prediction: analysis.RatePrediction
    error: str = ""

    @property
    def passed(self):
        return not self.error and self.fit.passed

    def row(self):
        row = self.fit.row()
        if self.error:
            # an observable that could not be fit counts as a failed verdict
            row[-1] = "fail"
        return row

    def to_dict(self):
        f = self.fit
        return {"observable": f.observable, "window": list(f.window), "fitted": _num(f.fitted_exponent),
                "stderr": _num(f.stderr), "predicted": _num(f.predicted_exponent),
                "prediction_kind": self.prediction.kind, "prediction_note": self.prediction.note,
                "tolerance": _num(f.tolerance), "verdict": "fail" if self.error else f.verdict,
                "error": self.error}


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def fit_observable(cfg, problem, stats, spec):
    pred = analysis.theoretical_rate(problem, cfg.tikhonov, cfg.noise, spec.observable)
    tol = spec.tolerance if spec.tolerance is not None else _default_tolerance(cfg)
    series = analysis.observable_series(stats, spec.observable)
    window = spec.window or analysis.default_window(stats.times)
    predicted = pred.exponent if pred.available else None
    blank = analysis.RateFit(tuple(window), float("nan"), float("nan"), predicted,
                             tol if predicted is not None else None, spec.observable)
    if series is None:
        return FitOutcome(blank, pred, f"{spec.observable} is not recorded for this configuration")
    try:
        if pred.kind == "exponential":
            fit = analysis.fit_log_linear(stats.times, series, window, predicted, tol, spec.observable)
        else:
            fit = analysis.fit_rate(stats.times, series, window, predicted, tol, spec.observable)
    except FitError as exc:
        return FitOutcome(blank, pred, str(exc))
    return FitOutcome(fit, pred)


def bound_checks(cfg, problem, stats):
    out = {}
    ic = cfg.integrator
    later = stats.times > ic.t0
    x0s = np.array([r.states[0] for r in stats.records if not r.diverged])
    for name in cfg.analysis.bounds:
        if name == "jensen":
            out[name] = jensen_check(stats)
        elif name == "convex_ergodic":
            if problem.dist_to_solutions is None or not len(x0s):
                continue
            d0 = float(np.mean(problem.dist_to_solutions(x0s) ** 2))
            rhs = convex_ergodic_bound(stats.times, ic.t0, d0, cfg.noise.sigma_star)
            out[name] = check_bound(stats.ergodic_gap, stats.se_ergodic_gap, rhs, mask=later)
        elif name == "strongly_convex" and problem.mu > 0 and len(x0s):
            d0 = float(np.mean(np.sum((x0s - problem.x_star) ** 2, axis=-1)))
            rhs = strongly_convex_bound(stats.times, ic.t0, d0, problem.mu, cfg.noise)
            out[name] = check_bound(stats.mean_dist_sq, stats.se_dist_sq, rhs, mask=later)
    return out


def reference_flow(cfg, problem, x0):
    """Deterministic flow ``x' = -grad f(x) - eps(t) x`` at ``T`` (smooth problems only).

    Quadratics without Tikhonov use the matrix exponential; otherwise a
    high-accuracy Runge-Kutta solve.
    """
    ic, tik = cfg.integrator, cfg.tikhonov
    x0 = np.asarray(x0, dtype=float)
    f = problem.smooth
    if f.code == 1 and not tik.active:
        return f.z + expm(-f.Q * (ic.horizon_T - ic.t0)) @ (x0 - f.z)

    def rhs(t, x):
        return -problem.grad_f(x) - float(epsilon(tik, max(t, ic.t0))) * x

    sol = solve_ivp(rhs, (ic.t0, ic.horizon_T), x0, method="DOP853", rtol=1e-12, atol=1e-14)
    return sol.y[:, -1]


@dataclasses.dataclass
class ExperimentResult:
    cfg: object
    stats: object
    fits: list
    bounds: dict
    report: object
    terminal_error: float = float("nan")

    @property
    def exit_code(self):
        ok = (self.stats.n_diverged == 0 and all(f.passed for f in self.fits)
              and all(b.passed for b in self.bounds.values()))
        return EXIT_OK if ok else EXIT_VERDICT

    def summary(self):
        st = self.stats
        return {
            "config": self.cfg.to_dict(),
            "admissibility": None if self.report is None else self.report.to_dict(),
            "n_paths": st.n_paths,
            "n_diverged": st.n_diverged,
            "diverged_paths": [
                {"path_index": r.path_index, "t": r.divergence_t, "norm": _num(r.divergence_norm)}
                for r in st.records if r.diverged
            ],
            "rates": [f.to_dict() for f in self.fits],
            "bounds": {k: v.to_dict() for k, v in self.bounds.items()},
            "terminal_error": _num(self.terminal_error),
            "exit_code": self.exit_code,
        }

    def write(self, outdir):
        os.makedirs(outdir, exist_ok=True)
        self.stats.to_csv(os.path.join(outdir, "ensemble.csv"))
        analysis.write_rates_csv(self.fits, os.path.join(outdir, "rates.csv"))
        with open(os.path.join(outdir, "summary.json"), "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def run_experiment(cfg, threads=1, backend=None):
    problem = cfg.build_problem()
    report = admissibility(cfg, problem)
    stats = run_ensemble(problem, cfg.tikhonov, cfg.noise, cfg.integrator, cfg.ensemble.n_paths,
                         cfg.ensemble.base_seed, threads=threads, backend=backend)
    fits = [fit_observable(cfg, problem, stats, spec) for spec in cfg.analysis.rates]
    bounds = bound_checks(cfg, problem, stats)
    term = float("nan")
    if cfg.noise.sigma_star == 0 and problem.is_smooth and stats.records and not stats.records[0].diverged:
        rec = stats.records[0]
        term = float(np.linalg.norm(rec.states[-1] - reference_flow(cfg, problem, rec.states[0])))
    return ExperimentResult(cfg, stats, fits, bounds, report, term)
