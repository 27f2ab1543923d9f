"""Acceptance criteria C1-C10. Each test prints one [PASS]/[FAIL] line before asserting.

Tolerances are pinned here, not read from the configs, so a config edit cannot
loosen a criterion.
"""
import csv
import os

import numpy as np
import pytest

from conftest import CONFIG_DIR
from sdiflow import analysis as A
from sdiflow import problems as P
from sdiflow.cli import main
from sdiflow.config import load_config
from sdiflow.experiment import run_experiment
from sdiflow.integrator import IntegratorConfig, simulate_path
from sdiflow.montecarlo import as_convergence_diagnostic
from sdiflow.schedules import NoiseSchedule, TikhonovSchedule

pytestmark = pytest.mark.slow

C1_TOL = 0.15
C3_REL = 0.05
C4_TOL = 0.05
C5_DELTA, C5_MIN, C5_MAX_CONTROL = 0.2, 0.95, 0.05
C6_TOL = 0.15
C7_TOL = 0.1
C9_SLACK, C9_BROWDER = 0.05, 1e-8


def cfg_path(name):
    return os.path.join(CONFIG_DIR, name)


def read_rates(outdir):
    with open(os.path.join(outdir, "rates.csv"), newline="") as fh:
        return {row["observable"]: row for row in csv.DictReader(fh)}


def test_c1_convex_ergodic_rate(tmp_path, acceptance_log):
    out = str(tmp_path / "c1")
    code = main(["simulate", cfg_path("convex_table1.yaml"), "--output", out, "--threads", "1"])
    row = read_rates(out)["ergodic_gap"]
    fitted = float(row["fitted"])
    ok = code == 0 and abs(fitted + 1.0) <= C1_TOL
    acceptance_log("C1 convex ergodic rate", ok,
                   f"fitted {fitted:+.4f} vs -1 +- {C1_TOL}, exit {code}")
    assert ok


def test_c2_constant_noise_floor(acceptance_log):
    cfg = load_config(cfg_path("constant_noise_floor.yaml"))
    assert cfg.noise.kind == "constant" and cfg.noise.sigma_star == 0.3
    res = run_experiment(cfg)
    chk = res.bounds["convex_ergodic"]
    ok = chk.passed and res.stats.n_diverged == 0
    acceptance_log("C2 constant-noise floor", ok,
                   f"{chk.n_violations} violations over {len(res.stats.times) - 1} record times "
                   f"(worst excess {chk.worst_excess:.3g})")
    assert ok


def test_c3_strongly_convex_bound(acceptance_log):
    cfg = load_config(cfg_path("strongly_convex.yaml"))
    res = run_experiment(cfg)
    chk = res.bounds["strongly_convex"]

    # noise-free: gap = (mu/2)|x|^2 decays like e^{-2 mu t}
    mu = 1.0
    prob = P.strongly_convex_quadratic(mu=mu, center=np.zeros(4))
    ic = IntegratorConfig(h=1e-3, t0=1.0, horizon_T=20.0, n_records=64, x0=(1.0, 1.0, 1.0, 1.0))
    rec = simulate_path(prob, TikhonovSchedule(), NoiseSchedule(), ic, seed=0)
    fit = A.fit_log_linear(rec.times, rec.gap, window=(2.0, 20.0))
    rel = abs(fit.fitted_exponent / (-2 * mu) - 1)
    ok = chk.passed and rel <= C3_REL
    acceptance_log("C3 strongly convex bound", ok,
                   f"{chk.n_violations} bound violations; log-linear slope {fit.fitted_exponent:.4f} "
                   f"vs {-2 * mu} +- {100 * C3_REL:g}%")
    assert ok


def test_c4_deterministic_tikhonov_rates(tmp_path, acceptance_log):
    out = str(tmp_path / "c4")
    main(["simulate", cfg_path("tikhonov_deterministic.yaml"), "--output", out, "--threads", "1"])
    rates = read_rates(out)
    r = 0.5
    gap = float(rates["gap"]["fitted"])
    dxe = float(rates["dist_to_x_eps"]["fitted"])
    ok_gap = abs(gap + r) <= C4_TOL
    ok_dxe = abs(dxe + (1 - r)) <= C4_TOL
    acceptance_log("C4 deterministic Tikhonov rates", ok_gap and ok_dxe,
                   f"gap {gap:+.4f} vs {-r} +- {C4_TOL}; |x - x_eps|^2 {dxe:+.4f} vs {-(1 - r)} +- {C4_TOL}")
    assert ok_gap and ok_dxe


def test_c5_min_norm_selection(acceptance_log):
    cfg = load_config(cfg_path("minnorm_selection.yaml"))
    assert cfg.tikhonov.r == 0.9 and cfg.integrator.horizon_T == 1e5
    target = np.array([2.0, 0.0])
    res = run_experiment(cfg)
    frac = as_convergence_diagnostic(res.stats.records, target, C5_DELTA)
    control = run_experiment(cfg.replace(tikhonov=TikhonovSchedule()))
    frac0 = as_convergence_diagnostic(control.stats.records, target, C5_DELTA)
    ok = frac >= C5_MIN and frac0 <= C5_MAX_CONTROL
    acceptance_log("C5 min-norm selection", ok,
                   f"tail fraction {frac:.2f} (need >= {C5_MIN}), control {frac0:.2f} (need <= {C5_MAX_CONTROL})")
    assert ok


def test_c6_stochastic_tikhonov_gap_rate(acceptance_log):
    base = load_config(cfg_path("tikhonov_stochastic.yaml"))
    parts, ok = [], True
    for alpha, predicted in ((1.9, -0.9), (1.5, -0.6)):
        noise = NoiseSchedule("power", base.noise.sigma_star, alpha, t0=base.integrator.t0)
        res = run_experiment(base.replace(noise=noise))
        fit = res.fits[0]
        assert fit.prediction.exponent == pytest.approx(predicted)
        fitted = fit.fit.fitted_exponent
        good = not fit.error and abs(fitted - predicted) <= C6_TOL
        ok = ok and good
        parts.append(f"alpha={alpha}: {fitted:+.4f} vs {predicted} +- {C6_TOL}")
    acceptance_log("C6 stochastic Tikhonov gap rate", ok, "; ".join(parts))
    assert ok


def test_c7_R_rate(acceptance_log):
    noise = NoiseSchedule("power", 1.0, 2.0)
    t = np.geomspace(1e2, 1e5, 16)
    R = [A.compute_R(s, 0.5, 1.0, noise) for s in t]
    fit = A.fit_rate(t, R, window=(1e2, 1e5), predicted=-1.5, tolerance=C7_TOL)
    acceptance_log("C7 R(t) rate", fit.passed, f"slope {fit.fitted_exponent:+.4f} vs -1.5 +- {C7_TOL}")
    assert fit.passed


def test_c8_dawson_bound(acceptance_log):
    rng = np.random.default_rng(8)
    a = np.geomspace(0.05, 20.0, 100)
    b = rng.permutation(np.linspace(0.05, 2.0, 100))
    t = rng.permutation(np.geomspace(1e-2, 1e3, 100))
    ratios = np.array([np.divide(*A.dawson_bound_check(ai, bi, ti)) for ai, bi, ti in zip(a, b, t)])
    n_bad = int(np.sum(ratios > 1))
    acceptance_log("C8 Dawson bound", n_bad == 0,
                   f"{n_bad} violations on 100 (a,b,t) points, max D/bound {ratios.max():.3f}")
    assert n_bad == 0


def test_c9_tikhonov_curve(acceptance_log):
    details, ok = [], True
    for prob in P.builtin_problems():
        rep = A.tikhonov_curve_study(prob, slack=C9_SLACK)
        browder = bool(np.all(rep.norm_x_eps <= rep.norm_x_star + C9_BROWDER))
        good = browder and (rep.degenerate or rep.slope >= 1 / (2 * rep.p) - C9_SLACK)
        ok = ok and good
        slope = "degenerate" if rep.degenerate else f"{rep.slope:.3f}"
        details.append(f"{prob.name}(p={rep.p:g}) {slope}")
    acceptance_log("C9 Tikhonov curve", ok, ", ".join(details))
    assert ok


def _prox_grid_error():
    worst = 0.0
    for g, xs in ((P.L1Norm(1.0), (3.0, -0.4, 1.2)),
                  (P.BoxDistance(np.array([1.0]), np.array([2.0])), (3.5, 1.5, -0.7))):
        u = np.arange(-10, 10 + 1e-4, 1e-4)
        for x in xs:
            for step in (0.3, 1.0, 2.5):
                obj = g.value(u[:, None]) + (u - x) ** 2 / (2 * step)
                worst = max(worst, abs(u[np.argmin(obj)] - g.prox(np.array([x]), step)[0]))
    return worst


def _gradient_fd_error():
    rng = np.random.default_rng(10)
    worst = 0.0
    for prob in P.builtin_problems():
        if prob.smooth.code == 0:
            continue
        for _ in range(20):
            x = rng.normal(scale=2.0, size=prob.dim)
            g = prob.grad_f(x)
            # central differences, compared relative to the gradient scale
            fd = np.array([(prob.f(x + e) - prob.f(x - e)) / (2 * e[k])
                           for k, e in enumerate(np.eye(prob.dim) * 1e-6 * max(1.0, np.abs(x).max()))])
            worst = max(worst, float(np.linalg.norm(g - fd) / max(1.0, np.linalg.norm(g))))
    return worst


def _halving_factor():
    errs = []
    prob = P.strongly_convex_quadratic(mu=1.0, center=np.zeros(2))
    for h in (1e-2, 5e-3):
        ic = IntegratorConfig(h=h, horizon_T=5.0, x0=(1.0, 2.0))
        rec = simulate_path(prob, TikhonovSchedule(), NoiseSchedule(), ic, seed=0)
        errs.append(np.linalg.norm(rec.states[-1] - np.array([1.0, 2.0]) * np.exp(-4.0)))
    return errs[0] / errs[1]


def _byte_identical():
    prob = P.l1_quadratic()
    noise = NoiseSchedule("power", 0.5, 2.0, state_coupling=0.3)
    tik = TikhonovSchedule("power", 1.0, 0.9)
    ic = IntegratorConfig(h=1e-2, horizon_T=50.0, x0=(2.0, -1.0, 0.5, 0.3))
    return simulate_path(prob, tik, noise, ic, seed=2024).to_csv() == \
        simulate_path(prob, tik, noise, ic, seed=2024).to_csv()


def _yosida_gaps():
    prob = P.l1_quadratic()
    noise = NoiseSchedule("power", 0.5, 2.0)
    tik = TikhonovSchedule("power", 1.0, 0.9)
    kw = dict(h=1e-3, horizon_T=3.0, x0=(2.0, -1.0, 0.5, 0.3))
    ref = simulate_path(prob, tik, noise, IntegratorConfig(**kw), seed=11).states[-1]
    return [float(np.linalg.norm(simulate_path(prob, tik, noise, IntegratorConfig(
        scheme="yosida_em", lam=lam, **kw), seed=11).states[-1] - ref)) for lam in (1e-1, 1e-2, 1e-3)]


def test_c10_property_suites(acceptance_log):
    prox_err = _prox_grid_error()
    grad_err = _gradient_fd_error()
    factor = _halving_factor()
    same = _byte_identical()
    gaps = _yosida_gaps()
    checks = {
        "prox-vs-grid": prox_err <= 1e-3,
        "grad-vs-fd": grad_err <= 1e-5,
        "halving": 1.7 <= factor <= 2.3,
        "determinism": same,
        "yosida-monotone": gaps[0] > gaps[1] > gaps[2],
    }
    ok = all(checks.values())
    acceptance_log("C10 property suites", ok,
                   f"prox {prox_err:.1e}, grad {grad_err:.1e}, halving {factor:.3f}, "
                   f"byte-identical {same}, yosida gaps {', '.join(f'{g:.2e}' for g in gaps)}")
    assert ok, {k: v for k, v in checks.items() if not v}
