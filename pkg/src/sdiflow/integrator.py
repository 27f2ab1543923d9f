"""Time stepping for the stochastic (Tikhonov-regularized) subgradient dynamics.

Two schemes on a uniform grid of step ``h``:

``prox_em``
    explicit in ``grad f``, implicit in the Tikhonov drift, backward (prox)
    in ``g``, explicit additive/multiplicative noise::

        y  = (x - h grad f(x) + sigma(t, x) dW) / (1 + h eps(t))
        x+ = prox_g(y, h / (1 + h eps(t)))

``yosida_em``
    fully explicit Euler-Maruyama on the Moreau-regularized drift
    ``grad f + (x - prox_{lam g}(x)) / lam + eps(t) x``.

The single-step functions below are straightforward numpy references; whole
paths go through ``kernels.simulate_paths``, which implements the same update.
"""
from __future__ import annotations

import csv
import dataclasses
import functools
import io
from typing import Optional

import numpy as np

from . import kernels
from .errors import ContractError, DivergenceError
from .problems import tikhonov_point
from .schedules import apply_sigma, epsilon

DEFAULT_N_RECORDS = 64
SCHEMES = tuple(kernels.SCHEME_CODES)


@dataclasses.dataclass(frozen=True)
class IntegratorConfig:
    """Step size, horizon, record grid and initial state of a run.

    ``x0`` is the deterministic initial state (zeros when omitted). With
    ``x0_scale > 0`` each path instead starts at ``x0 + x0_scale * N(0, I)``,
    drawn from a stream separate from the Brownian increments.
    """

    scheme: str = "prox_em"
    h: float = 1e-3
    lam: float = 1e-2
    t0: float = 1.0
    horizon_T: float = 10.0
    record_times: Optional[tuple] = None
    n_records: int = DEFAULT_N_RECORDS
    x0: Optional[tuple] = None
    x0_scale: float = 0.0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ContractError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.h > 0:
            raise ContractError("step size h must be positive")
        if not self.lam > 0:
            raise ContractError("Yosida parameter lambda must be positive")
        if not self.t0 > 0:
            raise ContractError("t0 must be positive")
        if not self.horizon_T > self.t0:
            raise ContractError("horizon_T must exceed t0")
        if self.horizon_T - self.t0 < self.h:
            raise ContractError("horizon shorter than one step")
        if self.x0_scale < 0:
            raise ContractError("x0_scale must be nonnegative")
        if self.record_times is not None:
            rt = np.asarray(self.record_times, dtype=float)
            if rt.ndim != 1 or rt.size == 0:
                raise ContractError("record_times must be a nonempty list")
            if np.any(np.diff(rt) <= 0):
                raise ContractError("record_times must be strictly increasing")
            if rt[0] < self.t0 or rt[-1] > self.horizon_T:
                raise ContractError("record_times must lie in [t0, T]")
            object.__setattr__(self, "record_times", tuple(float(v) for v in rt))
        elif self.n_records < 2:
            raise ContractError("n_records must be at least 2")
        if self.x0 is not None:
            object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))

    @property
    def n_steps(self):
        return int(round((self.horizon_T - self.t0) / self.h))

    def requested_times(self):
        if self.record_times is not None:
            return np.asarray(self.record_times)
        return np.geomspace(self.t0, self.horizon_T, self.n_records)

    def record_steps(self):
        """Step indices of the record grid; each time snaps to the nearest completed step."""
        k = np.rint((self.requested_times() - self.t0) / self.h).astype(np.int64)
        return np.unique(np.clip(k, 0, self.n_steps))

    def record_grid(self):
        return self.t0 + self.record_steps() * self.h

    def initial_state(self, dim, rng=None):
        x0 = np.zeros(dim) if self.x0 is None else np.asarray(self.x0, dtype=float)
        if x0.shape != (dim,):
            raise ContractError(f"x0 has {x0.size} entries, problem dimension is {dim}")
        if self.x0_scale > 0:
            if rng is None:
                raise ContractError("a random initial state needs a generator")
            x0 = x0 + self.x0_scale * rng.standard_normal(dim)
        return x0

    def validate_for(self, problem):
        """Stability conditions that depend on the problem; raises ContractError."""
        if np.isfinite(problem.L) and self.h * problem.L > 1.0 + 1e-12:
            raise ContractError(f"step h={self.h:g} exceeds 1/L = {1.0 / problem.L:g}")
        if self.scheme == "yosida_em" and not problem.is_smooth and self.h > self.lam * (1 + 1e-12):
            raise ContractError(f"yosida_em needs h <= lambda (h={self.h:g}, lambda={self.lam:g})")
        self.initial_state(problem.dim, np.random.default_rng(0))
        return self


@dataclasses.dataclass
class TrajectoryRecord:
    times: np.ndarray
    states: np.ndarray
    running_integral: np.ndarray
    running_gap_integral: np.ndarray
    gap: np.ndarray
    dist_to_min_norm_sq: np.ndarray
    lyapunov_E: Optional[np.ndarray] = None
    dist_to_x_eps_sq: Optional[np.ndarray] = None
    seed: int = 0
    path_index: int = 0
    diverged: bool = False
    divergence_t: float = float("nan")
    divergence_norm: float = float("nan")

    CSV_COLUMNS = ("t", "gap", "dist_to_min_norm_sq", "lyapunov_E", "dist_to_x_eps_sq")

    def __len__(self):
        return len(self.times)

    def to_csv(self, path=None):
        """Write the scalar observables plus the state; returns the text when ``path`` is None."""
        d = self.states.shape[1]
        n = len(self.times)
        nan = np.full(n, np.nan)
        cols = [self.times, self.gap, self.dist_to_min_norm_sq,
                nan if self.lyapunov_E is None else self.lyapunov_E,
                nan if self.dist_to_x_eps_sq is None else self.dist_to_x_eps_sq]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.CSV_COLUMNS) + [f"x{j}" for j in range(d)])
        for i in range(n):
            w.writerow([format_float(c[i]) for c in cols] + [format_float(v) for v in self.states[i]])
        text = buf.getvalue()
        if path is None:
            return text
        with open(path, "w", newline="") as fh:
            fh.write(text)
        return text


def format_float(v):
    return format(float(v), ".17g")


# ---------------------------------------------------------------------------
# random streams


def path_generator(seed, path_index, stream=0):
    """Independent generator for path ``path_index`` of an ensemble seeded by ``seed``.

    The seed sequence mixes the path index into the entropy pool, so streams of
    different paths are statistically independent regardless of run order.
    ``stream=0`` drives the Brownian increments, ``stream=1`` the initial state.
    """
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=(int(path_index), int(stream)))
    return np.random.Generator(np.random.PCG64(ss))


def brownian_increment(dim, h, rng):
    if not h > 0:
        raise ContractError(f"increment length h must be positive, got {h}")
    return np.sqrt(h) * rng.standard_normal(int(dim))


# ---------------------------------------------------------------------------
# single steps (reference implementation)


def _check_finite(x_new, t):
    nrm = float(np.linalg.norm(x_new))
    if not nrm <= kernels.DIVERGENCE_NORM:
        raise DivergenceError(t, nrm)
    return x_new


def step_prox_em(x, t, cfg, problem, tik, noise, rng):
    x = np.asarray(x, dtype=float)
    h = cfg.h
    eps = float(epsilon(tik, t))
    dw = brownian_increment(x.size, h, rng)
    denom = 1.0 + h * eps
    y = (x - h * problem.grad_f(x) + apply_sigma(noise, t, x, dw)) / denom
    return _check_finite(problem.prox_g(y, h / denom), t + h)


def step_yosida_em(x, t, cfg, problem, tik, noise, rng):
    x = np.asarray(x, dtype=float)
    h, lam = cfg.h, cfg.lam
    eps = float(epsilon(tik, t))
    dw = brownian_increment(x.size, h, rng)
    drift = problem.grad_f(x) + (x - problem.prox_g(x, lam)) / lam + eps * x
    return _check_finite(x - h * drift + apply_sigma(noise, t, x, dw), t + h)


STEPPERS = {"prox_em": step_prox_em, "yosida_em": step_yosida_em}


# ---------------------------------------------------------------------------
# Lyapunov function of the Tikhonov dynamics


@functools.lru_cache(maxsize=4096)
def _x_eps(problem, eps):
    return tikhonov_point(problem, eps).point


def x_eps(problem, eps):
    """Memoized Tikhonov point; the cache key is the problem identity and ``eps``."""
    return _x_eps(problem, float(eps)).copy()


def lyapunov_E(problem, tik, t, x):
    """``F_eps(x) - F_eps(x_eps) + eps/2 |x - x_eps|^2`` with ``eps = eps(t)``; ``x`` may be batched."""
    if not tik.active:
        raise ContractError("the Lyapunov function needs a power Tikhonov schedule")
    if not problem.is_smooth:
        raise ContractError("the Lyapunov function is defined for g = 0")
    eps = float(epsilon(tik, t))
    xe = x_eps(problem, eps)
    x = np.asarray(x, dtype=float)
    # difference of regularized objectives, arranged to avoid adding min F back in
    diff = problem.gap(x) - problem.gap(xe) + 0.5 * eps * (np.sum(x * x, axis=-1) - xe @ xe)
    return diff + 0.5 * eps * np.sum((x - xe) ** 2, axis=-1)


# ---------------------------------------------------------------------------
# whole paths


def build_record(problem, tik, times, states, int_x, int_gap, seed=0, path_index=0,
                 diverged=False, divergence_t=float("nan"), divergence_norm=float("nan")):
    """Assemble a TrajectoryRecord and evaluate the per-record observables."""
    x_star = problem.x_star
    with np.errstate(invalid="ignore"):
        gap = problem.gap(states)
        dist = np.sum((states - x_star) ** 2, axis=-1)
    lyap = dxe = None
    if tik.active:
        eps_t = [float(epsilon(tik, t)) for t in times]
        pts = np.array([x_eps(problem, e) for e in eps_t])
        dxe = np.sum((states - pts) ** 2, axis=-1)
        if problem.is_smooth:
            lyap = np.array([lyapunov_E(problem, tik, t, s) if np.all(np.isfinite(s)) else np.nan
                             for t, s in zip(times, states)])
    return TrajectoryRecord(
        times=np.asarray(times, dtype=float),
        states=states,
        running_integral=int_x,
        running_gap_integral=int_gap,
        gap=gap,
        dist_to_min_norm_sq=dist,
        lyapunov_E=lyap,
        dist_to_x_eps_sq=dxe,
        seed=int(seed),
        path_index=int(path_index),
        diverged=bool(diverged),
        divergence_t=divergence_t,
        divergence_norm=divergence_norm,
    )


def simulate_batch(problem, tik, noise, cfg, seed, path_indices, backend=None, threads=1):
    """Integrate the given paths; diverged paths are flagged, not raised."""
    cfg.validate_for(problem)
    path_indices = [int(i) for i in path_indices]
    x0s = np.array([cfg.initial_state(problem.dim, path_generator(seed, i, stream=1))
                    for i in path_indices])
    gens = [path_generator(seed, i) for i in path_indices]
    steps = cfg.record_steps()
    times = cfg.t0 + steps * cfg.h
    states, int_x, int_gap, status, fail_step, fail_norm = kernels.simulate_paths(
        gens, x0s, cfg.n_steps, cfg.h, steps, cfg.scheme, cfg.lam, problem, tik, noise, cfg.t0,
        backend=backend, threads=threads,
    )
    records = []
    for j, i in enumerate(path_indices):
        bad = bool(status[j])
        records.append(build_record(
            problem, tik, times, states[j], int_x[j], int_gap[j], seed=seed, path_index=i,
            diverged=bad,
            divergence_t=cfg.t0 + fail_step[j] * cfg.h if bad else float("nan"),
            divergence_norm=float(fail_norm[j]) if bad else float("nan"),
        ))
    return records


def simulate_path(problem, tik, noise, cfg, seed, path_index=0, backend=None):
    """One path over ``[t0, T]``; a pure function of its arguments.

    Raises DivergenceError when the state leaves the finite region.
    """
    rec = simulate_batch(problem, tik, noise, cfg, seed, [path_index], backend=backend)[0]
    if rec.diverged:
        raise DivergenceError(rec.divergence_t, rec.divergence_norm)
    return rec
