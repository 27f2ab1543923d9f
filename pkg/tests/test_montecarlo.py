import numpy as np
import pytest

from sdiflow import problems as P
from sdiflow.errors import ContractError
from sdiflow.integrator import IntegratorConfig, TrajectoryRecord
from sdiflow.montecarlo import (CSV_COLUMNS, as_convergence_diagnostic, check_bound,
                                convex_ergodic_bound, ergodic_average, jensen_check, run_ensemble,
                                strongly_convex_bound, time_averaged_gap)
from sdiflow.schedules import NoiseSchedule, TikhonovSchedule

OFF = TikhonovSchedule()
LS = P.rank_deficient_ls()


def synthetic_record(times, states, gaps=None):
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float).reshape(len(times), -1)
    dt = np.diff(times)[:, None]
    integ = np.vstack([np.zeros(states.shape[1]),
                       np.cumsum(0.5 * dt * (states[1:] + states[:-1]), axis=0)])
    gaps = np.zeros(len(times)) if gaps is None else np.asarray(gaps, dtype=float)
    gint = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(times) * (gaps[1:] + gaps[:-1]))])
    return TrajectoryRecord(times, states, integ, gint, gaps, np.zeros(len(times)))


class TestErgodicAverage:
    def test_constant_path(self):
        rec = synthetic_record(np.linspace(1, 5, 9), np.tile([2.0, -3.0], (9, 1)))
        for i in range(1, 9):
            np.testing.assert_allclose(ergodic_average(rec, i), [2.0, -3.0], rtol=1e-15)

    def test_linear_path(self):
        t = np.linspace(0, 1, 11)
        rec = synthetic_record(t, t)
        assert ergodic_average(rec, -1)[0] == pytest.approx(0.5, abs=1e-15)

    def test_first_index_is_state(self):
        rec = synthetic_record([1.0, 2.0], [[3.0], [4.0]])
        assert ergodic_average(rec, 0)[0] == 3.0

    def test_out_of_range(self):
        rec = synthetic_record([1.0, 2.0], [[3.0], [4.0]])
        with pytest.raises(ContractError):
            ergodic_average(rec, 5)

    def test_ergodic_gap_below_window_max(self, rng):
        t = np.linspace(1, 10, 50)
        g = rng.uniform(0, 3, size=50)
        rec = synthetic_record(t, np.zeros(50), g)
        avg = time_averaged_gap(rec)
        running_max = np.maximum.accumulate(g)
        assert np.all(avg <= running_max + 1e-12)


class TestEnsemble:
    def test_no_noise_zero_se(self):
        cfg = IntegratorConfig(h=1e-2, horizon_T=20.0, x0=(0.0, 5.0))
        st = run_ensemble(LS, TikhonovSchedule("power", 1.0, 0.9), NoiseSchedule(), cfg, 4, 1)
        assert np.all(st.se_gap == 0) and np.all(st.se_dist_sq == 0)
        assert np.all(st.se_ergodic_gap == 0)
        assert st.n_diverged == 0

    def test_needs_two_paths(self):
        with pytest.raises(ContractError):
            run_ensemble(LS, OFF, NoiseSchedule(), IntegratorConfig(), 1, 0)

    def test_se_shrinks_like_root_two(self):
        prob = P.strongly_convex_quadratic(mu=1.0, center=np.zeros(2))
        cfg = IntegratorConfig(h=1e-2, horizon_T=10.0)
        noise = NoiseSchedule("constant", 0.5)
        a = run_ensemble(prob, OFF, noise, cfg, 400, 8)
        b = run_ensemble(prob, OFF, noise, cfg, 800, 9)
        # average over the stationary tail to tame the sampling noise of the SE itself
        tail = a.times > 5
        ratio = np.mean(a.se_dist_sq[tail]) / np.mean(b.se_dist_sq[tail])
        assert abs(ratio / np.sqrt(2) - 1) < 0.2

    def test_deterministic_given_seed(self):
        cfg = IntegratorConfig(h=1e-2, horizon_T=10.0, x0=(0.0, 5.0))
        noise = NoiseSchedule("power", 0.5, 2.0)
        a = run_ensemble(LS, OFF, noise, cfg, 6, 42, threads=1)
        b = run_ensemble(LS, OFF, noise, cfg, 6, 42, threads=3)
        assert a.to_csv() == b.to_csv()

    def test_csv_header(self):
        cfg = IntegratorConfig(h=1e-2, horizon_T=5.0)
        st = run_ensemble(LS, OFF, NoiseSchedule("constant", 0.1), cfg, 3, 0)
        lines = st.to_csv().splitlines()
        assert tuple(lines[0].split(",")) == CSV_COLUMNS
        assert len(lines) == len(st.times) + 1

    def test_strongly_convex_noise_floor(self):
        mu, sig = 1.0, 0.3
        prob = P.strongly_convex_quadratic(mu=mu, center=np.zeros(4))
        cfg = IntegratorConfig(h=1e-2, horizon_T=30.0, x0=(1.0, 1.0, 1.0, 1.0))
        st = run_ensemble(prob, OFF, NoiseSchedule("constant", sig), cfg, 200, 2024)
        tail = st.times > 15
        assert np.all(st.mean_dist_sq[tail] <= sig**2 / mu + 3 * st.se_dist_sq[tail])
        # the floor is reached, not just bounded: stationary variance is sig^2 / (2 mu)
        assert np.mean(st.mean_dist_sq[tail]) == pytest.approx(sig**2 / (2 * mu), rel=0.15)

    def test_jensen_on_ensemble(self):
        cfg = IntegratorConfig(h=1e-2, horizon_T=100.0, x0=(0.0, 5.0))
        st = run_ensemble(LS, OFF, NoiseSchedule("constant", 0.3), cfg, 50, 5)
        assert jensen_check(st).passed


@pytest.fixture(scope="module")
def records():
    cfg = IntegratorConfig(h=1e-2, horizon_T=100.0, x0=(0.0, 5.0))
    noise = NoiseSchedule("power", 0.5, 2.0)
    return run_ensemble(LS, TikhonovSchedule("power", 1.0, 0.9), noise, cfg, 20, 3).records


class TestDiagnostic:
    def test_deterministic_reaches_min_norm(self):
        cfg = IntegratorConfig(h=1e-2, horizon_T=1e4, x0=(0.0, 5.0))
        st = run_ensemble(LS, TikhonovSchedule("power", 1.0, 0.9), NoiseSchedule(), cfg, 2, 0)
        assert as_convergence_diagnostic(st.records, LS.x_star, 0.1) == 1.0

    def test_far_target(self, records):
        assert as_convergence_diagnostic(records, np.array([100.0, 100.0]), 0.1) == 0.0

    def test_monotone_in_delta(self, records):
        fr = [as_convergence_diagnostic(records, LS.x_star, d) for d in np.geomspace(1e-3, 10, 30)]
        assert np.all(np.diff(fr) >= 0)
        assert fr[-1] == 1.0

    def test_empty(self):
        with pytest.raises(ContractError):
            as_convergence_diagnostic([], np.zeros(2), 1.0)


class TestBounds:
    def test_convex_bound_infinite_at_t0(self):
        rhs = convex_ergodic_bound([1.0, 2.0, 11.0], 1.0, 4.0, 0.3)
        assert np.isinf(rhs[0])
        np.testing.assert_allclose(rhs[1:], [2.0 + 0.045, 0.2 + 0.045])

    def test_strongly_convex_bound_at_t0(self):
        noise = NoiseSchedule("power", 0.5, 2.0)
        rhs = strongly_convex_bound([1.0], 1.0, 3.0, 2.0, noise)
        assert rhs[0] == pytest.approx(3.0 + 0.25 / 2.0 + 0.25)

    def test_check_bound_counts(self):
        chk = check_bound([1.0, 2.0, 3.0], [0.1, 0.1, 0.1], [1.0, 1.0, 1.0])
        assert not chk.passed and chk.n_violations == 2
        assert chk.worst_excess == pytest.approx(1.7)
        assert check_bound([1.0, 2.0], [0.0, 0.5], [1.0, 0.5]).passed

    def test_nan_counts_as_violation(self):
        assert not check_bound([np.nan], [0.0], [1.0]).passed

    def test_mask(self):
        assert check_bound([5.0, 0.0], [0.0, 0.0], [1.0, 1.0], mask=np.array([False, True])).passed
