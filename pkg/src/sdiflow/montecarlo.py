"""Ensembles of paths: sample means, standard errors, ergodic averages and bound checks."""
from __future__ import annotations

import csv
import dataclasses
import io
from typing import Optional

import numpy as np

from .errors import ContractError
from .integrator import format_float, simulate_batch
from .schedules import sigma_inf

SE_MULTIPLIER = 3.0
TAIL_FRACTION = 0.25
CSV_COLUMNS = ("t", "mean_gap", "se_gap", "mean_dist_sq", "se_dist_sq", "ergodic_gap",
               "mean_lyapunov", "n_paths")


def _mean_se(values):
    """Column means and standard errors (sample std / sqrt(n)) over axis 0."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    mean = values.mean(axis=0)
    if n < 2:
        return mean, np.full_like(mean, np.nan)
    return mean, values.std(axis=0, ddof=1) / np.sqrt(n)


@dataclasses.dataclass
class EnsembleStats:
    """Per-record-time ensemble estimates over the surviving paths.

    ``ergodic_gap`` is the mean of the time-averaged gap
    ``(t - t0)^-1 int_{t0}^t (F(X) - min F) ds``; ``gap_of_average`` is the
    mean of ``F(xbar(t)) - min F``. Both take their ``t -> t0`` limit at ``t0``.
    """

    times: np.ndarray
    mean_gap: np.ndarray
    se_gap: np.ndarray
    mean_dist_sq: np.ndarray
    se_dist_sq: np.ndarray
    ergodic_gap: np.ndarray
    se_ergodic_gap: np.ndarray
    gap_of_average: np.ndarray
    se_gap_of_average: np.ndarray
    n_paths: int
    n_diverged: int
    mean_lyapunov: Optional[np.ndarray] = None
    se_lyapunov: Optional[np.ndarray] = None
    mean_dist_to_x_eps: Optional[np.ndarray] = None
    se_dist_to_x_eps: Optional[np.ndarray] = None
    records: list = dataclasses.field(default_factory=list, repr=False)

    @property
    def n_surviving(self):
        return self.n_paths - self.n_diverged

    def to_csv(self, path=None):
        lyap = self.mean_lyapunov if self.mean_lyapunov is not None else np.full(len(self.times), np.nan)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i, t in enumerate(self.times):
            w.writerow([format_float(t), format_float(self.mean_gap[i]), format_float(self.se_gap[i]),
                        format_float(self.mean_dist_sq[i]), format_float(self.se_dist_sq[i]),
                        format_float(self.ergodic_gap[i]), format_float(lyap[i]), self.n_surviving])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def ergodic_average(record, t_index):
    """Trapezoidal time-average of the state over ``[t0, t_i]``, normalized by ``t_i - t0``."""
    t = record.times
    if not -len(t) <= t_index < len(t):
        raise ContractError(f"record index {t_index} out of range")
    span = t[t_index] - t[0]
    if span <= 0:
        return record.states[t_index].copy()
    return record.running_integral[t_index] / span


def time_averaged_gap(record):
    """``(t - t0)^-1 int_{t0}^t gap``, with the gap itself at ``t = t0``."""
    span = record.times - record.times[0]
    out = np.empty_like(span)
    pos = span > 0
    out[pos] = record.running_gap_integral[pos] / span[pos]
    out[~pos] = record.gap[~pos]
    return out


def state_averages(record):
    span = (record.times - record.times[0])[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        avg = np.where(span > 0, record.running_integral / np.where(span > 0, span, 1.0), record.states)
    return avg


def as_convergence_diagnostic(records, target, delta):
    """Fraction of paths whose last quarter of record times stays within ``delta`` of ``target``.

    Diverged paths count as failures.
    """
    if len(records) == 0:
        raise ContractError("need at least one record")
    target = np.asarray(target, dtype=float)
    hits = 0
    for rec in records:
        if rec.diverged:
            continue
        m = len(rec.times)
        start = min(m - 1, int(np.floor((1.0 - TAIL_FRACTION) * m)))
        dist = np.linalg.norm(rec.states[start:] - target, axis=-1)
        if np.all(dist <= delta):
            hits += 1
    return hits / len(records)


def aggregate(problem, records):
    """Reduce records (in path-index order) to EnsembleStats; diverged paths are excluded."""
    if len(records) < 1:
        raise ContractError("no records to aggregate")
    records = sorted(records, key=lambda r: r.path_index)
    alive = [r for r in records if not r.diverged]
    n_div = len(records) - len(alive)
    times = records[0].times
    if not alive:
        nan = np.full(len(times), np.nan)
        return EnsembleStats(times, nan, nan, nan, nan, nan, nan, nan, nan, len(records), n_div,
                             records=records)
    gap_m, gap_se = _mean_se([r.gap for r in alive])
    dist_m, dist_se = _mean_se([r.dist_to_min_norm_sq for r in alive])
    erg_m, erg_se = _mean_se([time_averaged_gap(r) for r in alive])
    goa_m, goa_se = _mean_se([problem.gap(state_averages(r)) for r in alive])
    lyap_m = lyap_se = dxe_m = dxe_se = None
    if alive[0].lyapunov_E is not None:
        lyap_m, lyap_se = _mean_se([r.lyapunov_E for r in alive])
    if alive[0].dist_to_x_eps_sq is not None:
        dxe_m, dxe_se = _mean_se([r.dist_to_x_eps_sq for r in alive])
    return EnsembleStats(
        times=times, mean_gap=gap_m, se_gap=gap_se, mean_dist_sq=dist_m, se_dist_sq=dist_se,
        ergodic_gap=erg_m, se_ergodic_gap=erg_se, gap_of_average=goa_m, se_gap_of_average=goa_se,
        n_paths=len(records), n_diverged=n_div, mean_lyapunov=lyap_m, se_lyapunov=lyap_se,
        mean_dist_to_x_eps=dxe_m, se_dist_to_x_eps=dxe_se, records=records,
    )


def run_ensemble(problem, tik, noise, cfg, n_paths, base_seed, threads=1, backend=None,
                 keep_records=True):
    """Run ``n_paths`` independent paths and aggregate; deterministic given ``base_seed``."""
    if n_paths < 2:
        raise ContractError("an ensemble needs at least 2 paths")
    records = simulate_batch(problem, tik, noise, cfg, base_seed, range(int(n_paths)),
                             backend=backend, threads=threads)
    stats = aggregate(problem, records)
    if not keep_records:
        stats.records = []
    return stats


# ---------------------------------------------------------------------------
# bound checks


def convex_ergodic_bound(times, t0, dist0_sq, sigma_star):
    """``dist(X0, S)^2 / (2 (t - t0)) + sigma*^2 / 2``, infinite at ``t = t0``."""
    span = np.asarray(times, dtype=float) - t0
    with np.errstate(divide="ignore"):
        return np.where(span > 0, dist0_sq / (2.0 * np.where(span > 0, span, 1.0)), np.inf) + 0.5 * sigma_star**2


def strongly_convex_bound(times, t0, dist0_sq, mu, noise):
    """Right-hand side of the decaying-noise mean-square bound, clock started at ``t0``.

    ``D e^{-mu (t - t0)} + sigma*^2/mu e^{-mu (t - t0)/2} + sigma_inf^2((t0 + t)/2)``.
    """
    t = np.asarray(times, dtype=float)
    s = t - t0
    return (dist0_sq * np.exp(-mu * s) + noise.sigma_star**2 / mu * np.exp(-0.5 * mu * s)
            + np.asarray(sigma_inf(noise, 0.5 * (t0 + t))) ** 2)


@dataclasses.dataclass(frozen=True)
class BoundCheck:
    passed: bool
    n_violations: int
    worst_excess: float
    lhs: np.ndarray
    rhs: np.ndarray

    def to_dict(self):
        worst = self.worst_excess if np.isfinite(self.worst_excess) else None
        return {"passed": self.passed, "n_violations": self.n_violations, "worst_excess": worst}


def check_bound(lhs, se, rhs, multiplier=SE_MULTIPLIER, mask=None):
    """``lhs <= rhs + multiplier * se`` pointwise (optionally on ``mask``)."""
    lhs, se, rhs = (np.asarray(v, dtype=float) for v in (lhs, se, rhs))
    excess = lhs - rhs - multiplier * np.nan_to_num(se)
    if mask is not None:
        excess = excess[mask]
    bad = ~(excess <= 0)
    worst = float(np.max(excess)) if excess.size else float("-inf")
    return BoundCheck(not bad.any(), int(bad.sum()), worst, lhs, rhs)


def jensen_check(stats, multiplier=2.0):
    """Sample ``F(xbar) - min F`` against the time-averaged gap plus ``multiplier`` SE."""
    return check_bound(stats.gap_of_average, stats.se_ergodic_gap, stats.ergodic_gap, multiplier)
