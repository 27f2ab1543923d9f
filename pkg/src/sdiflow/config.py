"""Experiment configuration: YAML in, validated dataclasses out, and back.

Layout (every table but ``problem`` is optional)::

    problem:     {name: rank_deficient_ls, params: {dim: 4}}
    tikhonov:    {kind: power, c: 1.0, r: 0.9}
    noise:       {kind: power, sigma_star: 0.5, alpha: 2.0, state_coupling: 0.0}
    integrator:  {scheme: prox_em, h: 1.0e-3, t0: 1.0, T: 1.0e4, lambda: 0.01, n_records: 64}
    ensemble:    {n_paths: 200, base_seed: 1, x0: [0, 0, 0, 0], x0_scale: 0.0}
    analysis:    {rates: [{observable: ergodic_gap, window: [316.2, 1.0e4], tolerance: 0.15}],
                  bounds: [convex_ergodic], assert_strict_tuning: false,
                  tikhonov_grid: {start: 0.1, stop: 1.0e-6, num: 26}}
    output:      runs/example

Errors are ConfigError with a dotted field path such as ``integrator.h``.
"""
from __future__ import annotations

import dataclasses
from typing import Optional

import numpy as np
import yaml

from .errors import ConfigError, ContractError
from .integrator import IntegratorConfig
from .problems import PROBLEM_FACTORIES, make_problem
from .schedules import NoiseSchedule, TikhonovSchedule

BOUND_CHECKS = ("convex_ergodic", "strongly_convex", "jensen")
OBSERVABLES = ("gap", "ergodic_gap", "dist_sq", "lyapunov", "dist_to_x_eps")


@dataclasses.dataclass(frozen=True)
class RateSpec:
    observable: str
    window: Optional[tuple] = None
    tolerance: Optional[float] = None


@dataclasses.dataclass(frozen=True)
class AnalysisConfig:
    rates: tuple = ()
    bounds: tuple = ()
    assert_strict_tuning: bool = False
    eps_grid: Optional[tuple] = None


@dataclasses.dataclass(frozen=True)
class EnsembleConfig:
    n_paths: int = 100
    base_seed: int = 0


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    problem_name: str
    problem_params: dict
    tikhonov: TikhonovSchedule
    noise: NoiseSchedule
    integrator: IntegratorConfig
    ensemble: EnsembleConfig
    analysis: AnalysisConfig
    output: Optional[str] = None

    def build_problem(self):
        return make_problem(self.problem_name, **self.problem_params)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        tik, noise, ic = self.tikhonov, self.noise, self.integrator
        integ = {"scheme": ic.scheme, "h": ic.h, "t0": ic.t0, "T": ic.horizon_T, "lambda": ic.lam}
        if ic.record_times is not None:
            integ["record_times"] = list(ic.record_times)
        else:
            integ["n_records"] = ic.n_records
        ens = {"n_paths": self.ensemble.n_paths, "base_seed": self.ensemble.base_seed,
               "x0_scale": ic.x0_scale}
        if ic.x0 is not None:
            ens["x0"] = list(ic.x0)
        rates = []
        for rs in self.analysis.rates:
            item = {"observable": rs.observable}
            if rs.window is not None:
                item["window"] = list(rs.window)
            if rs.tolerance is not None:
                item["tolerance"] = rs.tolerance
            rates.append(item)
        analysis = {"rates": rates, "bounds": list(self.analysis.bounds),
                    "assert_strict_tuning": self.analysis.assert_strict_tuning}
        if self.analysis.eps_grid is not None:
            analysis["eps_grid"] = list(self.analysis.eps_grid)
        out = {
            "problem": {"name": self.problem_name, "params": _plain(self.problem_params)},
            "tikhonov": {"kind": tik.kind, "c": tik.c, "r": tik.r},
            "noise": {"kind": noise.kind, "sigma_star": noise.sigma_star, "alpha": noise.alpha,
                      "state_coupling": noise.state_coupling},
            "integrator": integ,
            "ensemble": ens,
            "analysis": analysis,
        }
        if self.output is not None:
            out["output"] = self.output
        return out

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# field readers


class _Table:
    """Typed access to one mapping with path-qualified errors and unknown-key detection."""

    def __init__(self, data, path, allowed):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(path, "expected a table")
        unknown = sorted(set(data) - set(allowed))
        if unknown:
            raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0],
                              f"unknown key (allowed: {', '.join(allowed)})")
        self.data, self.path = data, path

    def _p(self, key):
        return f"{self.path}.{key}" if self.path else key

    def number(self, key, default=None, positive=False, nonneg=False):
        v = self.data.get(key, default)
        if v is None:
            if default is None and key in self.data:
                raise ConfigError(self._p(key), "value required")
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            # YAML 1.1 reads 1e-3 (no dot) as a string; accept numeric strings
            try:
                v = float(v)
            except (TypeError, ValueError):
                raise ConfigError(self._p(key), f"expected a number, got {v!r}") from None
        v = float(v)
        if not np.isfinite(v):
            raise ConfigError(self._p(key), "must be finite")
        if positive and not v > 0:
            raise ConfigError(self._p(key), f"must be positive, got {v:g}")
        if nonneg and v < 0:
            raise ConfigError(self._p(key), f"must be nonnegative, got {v:g}")
        return v

    def integer(self, key, default=None, minimum=None):
        v = self.data.get(key, default)
        if isinstance(v, bool) or not isinstance(v, int):
            if isinstance(v, float) and v.is_integer():
                v = int(v)
            else:
                raise ConfigError(self._p(key), f"expected an integer, got {v!r}")
        if minimum is not None and v < minimum:
            raise ConfigError(self._p(key), f"must be at least {minimum}, got {v}")
        return v

    def string(self, key, default=None, choices=None):
        v = self.data.get(key, default)
        if not isinstance(v, str):
            raise ConfigError(self._p(key), f"expected a string, got {v!r}")
        if choices is not None and v not in choices:
            raise ConfigError(self._p(key), f"must be one of {list(choices)}, got {v!r}")
        return v

    def boolean(self, key, default=False):
        v = self.data.get(key, default)
        if not isinstance(v, bool):
            raise ConfigError(self._p(key), f"expected true/false, got {v!r}")
        return v

    def vector(self, key):
        v = self.data.get(key)
        if v is None:
            return None
        if not isinstance(v, (list, tuple)):
            raise ConfigError(self._p(key), "expected a list of numbers")
        try:
            arr = np.asarray(v, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(self._p(key), "expected a list of numbers") from None
        if arr.ndim != 1 or not np.all(np.isfinite(arr)):
            raise ConfigError(self._p(key), "expected a flat list of finite numbers")
        return tuple(float(x) for x in arr)


def _problem(data):
    tab = _Table(data, "problem", ("name", "params"))
    if "name" not in tab.data:
        raise ConfigError("problem.name", "value required")
    name = tab.string("name", choices=sorted(PROBLEM_FACTORIES))
    params = tab.data.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("problem.params", "expected a table")
    return name, dict(params)


def _tikhonov(data, t0):
    tab = _Table(data, "tikhonov", ("kind", "c", "r"))
    kind = tab.string("kind", "off", ("off", "power"))
    c = tab.number("c", 1.0, positive=True)
    r = tab.number("r", 1.0)
    if kind == "power" and not 0 < r <= 1:
        raise ConfigError("tikhonov.r", f"must lie in (0, 1], got {r:g}")
    return TikhonovSchedule(kind, c, r if 0 < r <= 1 else 1.0, t0)


def _noise(data, t0):
    tab = _Table(data, "noise", ("kind", "sigma_star", "alpha", "state_coupling"))
    kind = tab.string("kind", "constant", ("constant", "power"))
    sigma = tab.number("sigma_star", 0.0, nonneg=True)
    alpha = tab.number("alpha", 0.0, nonneg=True)
    theta = tab.number("state_coupling", 0.0, nonneg=True)
    if theta > 1:
        raise ConfigError("noise.state_coupling", f"must lie in [0, 1], got {theta:g}")
    return NoiseSchedule(kind, sigma, alpha, theta, t0)


def _rates(items):
    if items is None:
        return ()
    if not isinstance(items, list):
        raise ConfigError("analysis.rates", "expected a list of tables")
    out = []
    for i, item in enumerate(items):
        path = f"analysis.rates[{i}]"
        tab = _Table(item, path, ("observable", "window", "tolerance"))
        if "observable" not in tab.data:
            raise ConfigError(f"{path}.observable", "value required")
        obs = tab.string("observable", choices=OBSERVABLES)
        window = tab.vector("window")
        if window is not None and (len(window) != 2 or not 0 < window[0] < window[1]):
            raise ConfigError(f"{path}.window", "expected [t_lo, t_hi] with 0 < t_lo < t_hi")
        tol = tab.number("tolerance", None, positive=True) if "tolerance" in tab.data else None
        out.append(RateSpec(obs, window, tol))
    return tuple(out)


def _eps_grid(tab):
    grid = tab.data.get("eps_grid")
    spec = tab.data.get("tikhonov_grid")
    if grid is not None and spec is not None:
        raise ConfigError("analysis.eps_grid", "give either eps_grid or tikhonov_grid, not both")
    if spec is not None:
        g = _Table(spec, "analysis.tikhonov_grid", ("start", "stop", "num"))
        start = g.number("start", 0.1, positive=True)
        stop = g.number("stop", 1e-6, positive=True)
        num = g.integer("num", 26, minimum=2)
        values = tuple(float(v) for v in np.geomspace(start, stop, num))
        path = "analysis.tikhonov_grid"
    elif grid is not None:
        values = tab.vector("eps_grid")
        path = "analysis.eps_grid"
    else:
        return None
    arr = np.asarray(values)
    if np.any(arr <= 0) or np.any(arr > 1):
        raise ConfigError(path, "epsilon values must lie in (0, 1]")
    if arr.size < 2 or np.any(np.diff(arr) >= 0):
        raise ConfigError(path, "epsilon grid must hold at least two strictly decreasing values")
    return tuple(values)


def _analysis(data):
    tab = _Table(data, "analysis", ("rates", "bounds", "assert_strict_tuning", "eps_grid", "tikhonov_grid"))
    bounds = tab.data.get("bounds") or []
    if not isinstance(bounds, list) or any(b not in BOUND_CHECKS for b in bounds):
        raise ConfigError("analysis.bounds", f"expected a list drawn from {list(BOUND_CHECKS)}")
    return AnalysisConfig(
        rates=_rates(tab.data.get("rates")),
        bounds=tuple(bounds),
        assert_strict_tuning=tab.boolean("assert_strict_tuning", False),
        eps_grid=_eps_grid(tab),
    )


def parse_config(data):
    """Validate a mapping (as loaded from YAML) into an ExperimentConfig."""
    top = _Table(data, "", ("problem", "tikhonov", "noise", "integrator", "ensemble", "analysis", "output"))
    name, params = _problem(top.data.get("problem"))

    integ = _Table(top.data.get("integrator"), "integrator",
                   ("scheme", "h", "t0", "T", "lambda", "n_records", "record_times"))
    t0 = integ.number("t0", 1.0, positive=True)
    horizon = integ.number("T", 10.0, positive=True)
    if not horizon > t0:
        raise ConfigError("integrator.T", f"must exceed t0 = {t0:g}")
    h = integ.number("h", 1e-3, positive=True)
    if h > horizon - t0:
        raise ConfigError("integrator.h", "step exceeds the horizon")
    scheme = integ.string("scheme", "prox_em", ("prox_em", "yosida_em"))
    lam = integ.number("lambda", 1e-2, positive=True)
    n_records = integ.integer("n_records", 64, minimum=2)
    record_times = integ.vector("record_times")
    if record_times is not None:
        rt = np.asarray(record_times)
        if np.any(np.diff(rt) <= 0) or rt[0] < t0 or rt[-1] > horizon:
            raise ConfigError("integrator.record_times", "must increase strictly within [t0, T]")

    ens = _Table(top.data.get("ensemble"), "ensemble", ("n_paths", "base_seed", "x0", "x0_scale"))
    n_paths = ens.integer("n_paths", 100, minimum=2)
    seed = ens.integer("base_seed", 0, minimum=0)
    x0 = ens.vector("x0")
    x0_scale = ens.number("x0_scale", 0.0, nonneg=True)

    output = top.data.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output", "expected a path string")

    try:
        cfg = ExperimentConfig(
            problem_name=name,
            problem_params=params,
            tikhonov=_tikhonov(top.data.get("tikhonov"), t0),
            noise=_noise(top.data.get("noise"), t0),
            integrator=IntegratorConfig(scheme, h, lam, t0, horizon, record_times, n_records, x0, x0_scale),
            ensemble=EnsembleConfig(n_paths, seed),
            analysis=_analysis(top.data.get("analysis")),
            output=output,
        )
    except ContractError as exc:
        raise ConfigError("integrator", str(exc)) from None
    try:
        problem = cfg.build_problem()
    except (TypeError, ContractError, ValueError) as exc:
        raise ConfigError("problem.params", str(exc)) from None
    try:
        cfg.integrator.validate_for(problem)
    except ContractError as exc:
        field = "ensemble.x0" if "x0" in str(exc) else "integrator.h"
        raise ConfigError(field, str(exc)) from None
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(str(path), f"YAML parse error at {where}: {getattr(exc, 'problem', exc)}") from None
    return parse_config(data)
