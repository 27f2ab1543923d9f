"""Rate fits, the rate oracle, the R(t) functional, Dawson bounds and Tikhonov curves."""
from __future__ import annotations

import csv
import dataclasses
import io
import math
from typing import Optional

import numpy as np
from scipy import stats

from . import quadrature
from .errors import ContractError, FitError
from .integrator import format_float
from .problems import tikhonov_point
from .schedules import sigma_inf

MIN_FIT_POINTS = 8
WINDOW_DECADES = 1.5
STOCHASTIC_TOL = 0.15
DETERMINISTIC_TOL = 0.05
CURVE_SLACK = 0.05
BROWDER_TOL = 1e-8
DEGENERATE_TOL = 1e-12
OBSERVABLES = ("gap", "ergodic_gap", "dist_sq", "lyapunov", "dist_to_x_eps")
RATES_COLUMNS = ("observable", "window_lo", "window_hi", "fitted", "stderr", "predicted", "verdict")
CURVE_COLUMNS = ("epsilon", "norm_x_eps", "dist_to_xstar")


# ---------------------------------------------------------------------------
# fits


@dataclasses.dataclass(frozen=True)
class RateFit:
    window: tuple
    fitted_exponent: float
    stderr: float
    predicted_exponent: Optional[float] = None
    tolerance: Optional[float] = None
    observable: str = ""
    n_points: int = 0
    intercept: float = 0.0

    @property
    def verdict(self):
        if self.predicted_exponent is None or self.tolerance is None:
            return "n/a"
        ok = abs(self.fitted_exponent - self.predicted_exponent) <= self.tolerance
        return "pass" if ok else "fail"

    @property
    def passed(self):
        return self.verdict != "fail"

    def row(self):
        pred = "" if self.predicted_exponent is None else format_float(self.predicted_exponent)
        return [self.observable, format_float(self.window[0]), format_float(self.window[1]),
                format_float(self.fitted_exponent), format_float(self.stderr), pred, self.verdict]


def default_window(times):
    t_hi = float(times[-1])
    return (t_hi / 10**WINDOW_DECADES, t_hi)


def _window_mask(times, values, window):
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape:
        raise FitError("times and values differ in shape")
    lo, hi = default_window(times) if window is None else (float(window[0]), float(window[1]))
    if not lo < hi:
        raise FitError(f"empty window [{lo:g}, {hi:g}]")
    # a small relative slack keeps window edges that coincide with record times
    mask = (times >= lo * (1 - 1e-12)) & (times <= hi * (1 + 1e-12))
    if mask.sum() < MIN_FIT_POINTS:
        raise FitError(f"window [{lo:g}, {hi:g}] holds {int(mask.sum())} points, need {MIN_FIT_POINTS}")
    return times[mask], values[mask], (lo, hi)


def fit_rate(times, values, window=None, predicted=None, tolerance=STOCHASTIC_TOL, observable=""):
    """Least-squares slope of ``log value`` against ``log t`` over ``window``."""
    t, v, win = _window_mask(times, values, window)
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise FitError(f"nonpositive or non-finite values in window [{win[0]:g}, {win[1]:g}]; "
                       "the observable reached its noise floor, shrink the window")
    res = stats.linregress(np.log(t), np.log(v))
    return RateFit(win, float(res.slope), float(res.stderr), predicted,
                   tolerance if predicted is not None else None, observable, int(t.size),
                   float(res.intercept))


def fit_log_linear(times, values, window=None, predicted=None, tolerance=None, observable=""):
    """Slope of ``log value`` against ``t`` (exponential decay rate, negative for decay)."""
    t, v, win = _window_mask(times, values, window)
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise FitError("nonpositive or non-finite values in window")
    res = stats.linregress(t, np.log(v))
    return RateFit(win, float(res.slope), float(res.stderr), predicted, tolerance, observable,
                   int(t.size), float(res.intercept))


# ---------------------------------------------------------------------------
# rate oracle


@dataclasses.dataclass(frozen=True)
class RatePrediction:
    """``kind`` is ``power`` (``value ~ t^exponent``), ``exponential``
    (``value ~ e^{exponent t}``) or ``none`` (``note`` says why)."""

    kind: str
    exponent: Optional[float] = None
    note: str = ""

    @property
    def available(self):
        return self.kind != "none"


def _none(note):
    return RatePrediction("none", None, note)


def _noise_alpha(noise):
    """Decay exponent of ``sigma_inf^2``: inf without noise, None for constant noise."""
    if noise.sigma_star == 0:
        return math.inf
    if noise.kind == "constant":
        return None
    return noise.alpha


def theoretical_rate(problem, tik, noise, observable):
    """Predicted decay exponent of the dominant term of the relevant bound."""
    if observable not in OBSERVABLES:
        raise ContractError(f"unknown observable {observable!r}; expected one of {OBSERVABLES}")
    alpha = _noise_alpha(noise)
    if not tik.active:
        return _rate_plain(problem, alpha, observable)
    return _rate_tikhonov(problem, tik, alpha, observable)


def _rate_plain(problem, alpha, observable):
    if observable == "ergodic_gap":
        if alpha is None or alpha <= 1:
            return _none("sigma_inf is not square integrable: the ergodic gap is only bounded by "
                         "dist(X0,S)^2/(2t) + sigma*^2/2")
        return RatePrediction("power", -1.0)
    if observable == "dist_sq":
        if problem.mu <= 0:
            return _none("no mean-square rate to the solution set without strong convexity")
        if alpha == math.inf:
            return RatePrediction("exponential", -problem.mu)
        if alpha is None or alpha == 0:
            return _none("constant noise: mean-square distance only bounded by sigma*^2/mu")
        return RatePrediction("power", -alpha, "noise term sigma_inf^2 dominates the exponential one")
    if observable == "gap":
        return _none("without Tikhonov regularization only the ergodic gap carries a rate")
    return _none(f"{observable} is defined only for a Tikhonov schedule")


def _rate_tikhonov(problem, tik, alpha, observable):
    r = tik.r
    if not problem.is_smooth:
        return _none("Tikhonov rates are established for g = 0 only")
    if not 0 < r < 1:
        return _none("Tikhonov rates need 0 < r < 1")
    p = problem.p
    if alpha == math.inf:
        # deterministic flow
        if observable == "gap":
            return RatePrediction("power", -r)
        if observable == "lyapunov":
            return RatePrediction("power", -1.0)
        if observable == "dist_to_x_eps":
            return RatePrediction("power", -(1.0 - r))
        if observable == "dist_sq":
            if p is None:
                return _none("no error-bound exponent p")
            return RatePrediction("power", -(r / p) if r < p / (p + 1) else -(1.0 - r))
        return _none("no ergodic rate is established under Tikhonov regularization")
    if alpha is None or alpha <= 1:
        return _none("sigma_inf must be square integrable (alpha > 1)")
    if observable == "gap":
        return RatePrediction("power", -(alpha - r) if alpha < 2 * r else -r)
    if observable == "lyapunov":
        return RatePrediction("power", -min(1.0, alpha - r))
    if observable in ("dist_to_x_eps", "dist_sq"):
        if alpha <= max(2 * r, 1.0):
            return _none("the t^r R(t) term need not vanish for alpha <= max(2r, 1)")
        if observable == "dist_to_x_eps":
            return RatePrediction("power", -min(1.0 - r, alpha - 2 * r))
        if p is None:
            return _none("no error-bound exponent p")
        return RatePrediction("power", -min(1.0 - r, r / p, alpha - 2 * r))
    return _none("no ergodic rate is established under Tikhonov regularization")


# ---------------------------------------------------------------------------
# R(t) and the Dawson-type integral


def compute_R(t, r, t1, noise, rtol=quadrature.RTOL):
    """``int_{t1}^t exp[(s^{1-r} - t^{1-r})/(1-r)] sigma_inf^2(s) ds``; every exponent is <= 0."""
    if not t > t1 > 0:
        raise ContractError("need t > t1 > 0")
    if not 0 < r < 1:
        raise ContractError("need 0 < r < 1")
    if noise.sigma_star == 0:
        return 0.0
    q = 1.0 - r
    tq = t**q

    def integrand(s):
        return np.exp((s**q - tq) / q) * np.asarray(sigma_inf(noise, s)) ** 2

    # the mass sits within a few t^r of t; log-spaced seeds resolve it quickly
    points = np.geomspace(t1, t, 48)
    return quadrature.integrate(integrand, t1, t, rtol=rtol, breakpoints=points)


def dawson_bound_check(a, b, t, rtol=quadrature.RTOL):
    """``(D_{a,b}(t), 2/(ab) t^{1-b})`` with ``D_{a,b}(t) = int_0^t exp(a(s^b - t^b)) ds``."""
    if not a > 0:
        raise ContractError("need a > 0")
    if not 0 < b <= 2:
        raise ContractError("need b in (0, 2]")
    if not t > 0:
        raise ContractError("need t > 0")
    tb = t**b
    points = np.concatenate([np.geomspace(t * 1e-6, t, 32), t - np.geomspace(t * 1e-6, t * 0.5, 16)])
    value = quadrature.integrate(lambda s: np.exp(a * (s**b - tb)), 0.0, t, rtol=rtol, breakpoints=points)
    return value, 2.0 / (a * b) * t ** (1.0 - b)


# ---------------------------------------------------------------------------
# Tikhonov curve


@dataclasses.dataclass(frozen=True)
class CurveReport:
    epsilon: np.ndarray
    norm_x_eps: np.ndarray
    dist_to_xstar: np.ndarray
    norm_x_star: float
    p: float
    threshold: float
    slope: float
    stderr: float
    degenerate: bool
    browder_ok: bool

    @property
    def slope_ok(self):
        return self.degenerate or self.slope >= self.threshold

    @property
    def passed(self):
        return self.browder_ok and self.slope_ok

    @property
    def verdict(self):
        if not self.browder_ok:
            return "fail"
        if self.degenerate:
            return "degenerate"
        return "pass" if self.slope_ok else "fail"

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for e, n, d in zip(self.epsilon, self.norm_x_eps, self.dist_to_xstar):
            w.writerow([format_float(e), format_float(n), format_float(d)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def summary(self):
        return {"verdict": self.verdict, "slope": self.slope, "stderr": self.stderr,
                "threshold": self.threshold, "degenerate": self.degenerate,
                "browder_ok": self.browder_ok, "norm_x_star": self.norm_x_star}


DEFAULT_EPS_GRID = tuple(np.geomspace(1e-1, 1e-6, 26))


def tikhonov_curve_study(problem, eps_grid=DEFAULT_EPS_GRID, slack=CURVE_SLACK):
    """Tikhonov points over ``eps_grid`` with the Browder and decay-slope checks.

    The decay verdict is ``slope >= 1/(2p) - slack`` for the log-log slope of
    ``|x_eps - x*|`` against ``eps``. A curve that sits on ``x*`` is reported
    as degenerate.
    """
    eps = np.asarray(eps_grid, dtype=float)
    if eps.ndim != 1 or eps.size < 2:
        raise ContractError("epsilon grid needs at least two values")
    if np.any(eps <= 0) or np.any(eps > 1):
        raise ContractError("epsilon grid must lie in (0, 1]")
    if np.any(np.diff(eps) >= 0):
        raise ContractError("epsilon grid must be strictly decreasing")
    if problem.p is None:
        raise ContractError("problem carries no error-bound exponent p")
    pts = np.array([tikhonov_point(problem, e).point for e in eps])
    norms = np.linalg.norm(pts, axis=1)
    dists = np.linalg.norm(pts - problem.x_star, axis=1)
    ns = float(np.linalg.norm(problem.x_star))
    browder = bool(np.all(norms <= ns + BROWDER_TOL))
    threshold = 1.0 / (2.0 * problem.p) - slack
    degenerate = bool(np.all(dists <= DEGENERATE_TOL * max(1.0, ns)))
    slope = stderr = float("nan")
    if not degenerate:
        pos = dists > DEGENERATE_TOL * max(1.0, ns)
        if pos.sum() >= 2:
            res = stats.linregress(np.log(eps[pos]), np.log(dists[pos]))
            slope, stderr = float(res.slope), float(res.stderr)
            if pos.sum() == 2:
                stderr = 0.0
        else:
            degenerate = True
    return CurveReport(eps, norms, dists, ns, float(problem.p), threshold, slope, stderr,
                       degenerate, browder)


# ---------------------------------------------------------------------------
# reports


def write_rates_csv(fits, path=None):
    """``fits`` holds RateFit objects (or anything with a matching ``row()``)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RATES_COLUMNS)
    for fit in fits:
        w.writerow(fit.row())
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def observable_series(ens, observable):
    """Mean record of ``observable`` from EnsembleStats (None when not recorded)."""
    return {
        "gap": ens.mean_gap,
        "ergodic_gap": ens.ergodic_gap,
        "dist_sq": ens.mean_dist_sq,
        "lyapunov": ens.mean_lyapunov,
        "dist_to_x_eps": ens.mean_dist_to_x_eps,
    }[observable]
