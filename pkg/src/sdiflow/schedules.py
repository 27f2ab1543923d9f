"""Tikhonov parameter and diffusion schedules, with admissibility checks."""
from __future__ import annotations

import dataclasses

import numpy as np

from .errors import ContractError

# max |grad phi| for phi(x) = 1 / (1 + |x|^2), attained at |x|^2 = 1/3
PHI_LIPSCHITZ = 3.0 * np.sqrt(3.0) / 8.0


@dataclasses.dataclass(frozen=True)
class TikhonovSchedule:
    """``eps(t) = c * t^(-r)`` (kind ``power``) or ``eps = 0`` (kind ``off``)."""

    kind: str = "off"
    c: float = 1.0
    r: float = 1.0
    t0: float = 1.0

    def __post_init__(self):
        if self.kind not in ("off", "power"):
            raise ContractError(f"tikhonov kind must be 'off' or 'power', got {self.kind!r}")
        if self.t0 <= 0:
            raise ContractError("t0 must be positive")
        if self.kind == "power":
            if self.c <= 0:
                raise ContractError("tikhonov amplitude c must be positive")
            if not 0 < self.r <= 1:
                raise ContractError(f"tikhonov exponent r must lie in (0, 1], got {self.r}")

    @property
    def active(self):
        return self.kind == "power"


@dataclasses.dataclass(frozen=True)
class NoiseSchedule:
    """Diagonal diffusion ``sigma(t, x) = s(t) [(1 - theta) + theta phi(x)] I``.

    ``s(t) = sigma_inf(t) / sqrt(d)`` so the Hilbert-Schmidt norm never exceeds
    ``sigma_inf(t)``; ``phi(x) = 1 / (1 + |x|^2)`` and ``theta`` is the
    ``state_coupling`` weight in ``[0, 1]`` (0 gives additive noise).
    """

    kind: str = "constant"
    sigma_star: float = 0.0
    alpha: float = 0.0
    state_coupling: float = 0.0
    t0: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "power"):
            raise ContractError(f"noise kind must be 'constant' or 'power', got {self.kind!r}")
        if self.sigma_star < 0:
            raise ContractError("sigma_star must be nonnegative")
        if self.alpha < 0:
            raise ContractError("alpha must be nonnegative")
        if not 0 <= self.state_coupling <= 1:
            raise ContractError("state_coupling must lie in [0, 1]")
        if self.t0 <= 0:
            raise ContractError("t0 must be positive")

    @property
    def lipschitz_constant(self):
        """``L0`` in ``|sigma(t,x) - sigma(t,y)|_HS <= L0 |x - y|``."""
        return self.state_coupling * self.sigma_star * PHI_LIPSCHITZ

    @property
    def square_integrable(self):
        if self.sigma_star == 0:
            return True
        return self.kind == "power" and self.alpha > 1

    @property
    def vanishes(self):
        return self.sigma_star == 0 or (self.kind == "power" and self.alpha > 0)


def _check_time(t, t0):
    t = np.asarray(t, dtype=float)
    if np.any(t < t0 * (1 - 1e-12)):
        raise ContractError(f"time {t} precedes t0 = {t0}")
    return t


def epsilon(schedule, t):
    t = _check_time(t, schedule.t0)
    if schedule.kind == "off":
        return np.zeros_like(t)[()]
    return (schedule.c * t ** (-schedule.r))[()]


def sigma_inf(schedule, t):
    """Uniform-in-state Hilbert-Schmidt bound of the diffusion at time ``t``."""
    t = _check_time(t, schedule.t0)
    if schedule.kind == "constant":
        return np.full_like(t, schedule.sigma_star)[()]
    return (schedule.sigma_star * (t / schedule.t0) ** (-schedule.alpha / 2))[()]


def noise_scale(schedule, t, x):
    """Scalar multiplying ``dW`` in ``sigma(t, x) dW``; ``x`` may be batched."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    s = sigma_inf(schedule, t) / np.sqrt(d)
    theta = schedule.state_coupling
    if theta == 0:
        return s * np.ones(x.shape[:-1])
    phi = 1.0 / (1.0 + np.einsum("...i,...i->...", x, x))
    return s * ((1.0 - theta) + theta * phi)


def apply_sigma(schedule, t, x, dW):
    x = np.asarray(x, dtype=float)
    dW = np.asarray(dW, dtype=float)
    if x.shape != dW.shape:
        raise ContractError(f"state shape {x.shape} and increment shape {dW.shape} differ")
    return np.asarray(noise_scale(schedule, t, x))[..., None] * dW


def sigma_hs_norm(schedule, t, x):
    """``|sigma(t, x)|_HS`` for the diagonal family (``sqrt(d)`` times the scale)."""
    x = np.asarray(x, dtype=float)
    return noise_scale(schedule, t, x) * np.sqrt(x.shape[-1])


def is_square_integrable(schedule):
    """Analytic test of ``sigma_inf in L^2([t0, inf))``: ``int t^-alpha < inf`` iff ``alpha > 1``."""
    return schedule.square_integrable


@dataclasses.dataclass(frozen=True)
class AdmissibilityReport:
    T1: bool
    T2: bool
    T3: bool
    noise_square_integrable: bool
    noise_nonincreasing: bool
    strict_tuning: bool
    threshold: float
    messages: tuple = ()

    def to_dict(self):
        return dataclasses.asdict(self) | {"messages": list(self.messages)}


def tuning_threshold(p):
    return 2.0 * p / (2.0 * p + 1.0)


def check_admissibility(tik, noise, problem):
    """Advisory report on the decay conditions of the Tikhonov and noise schedules.

    ``T3`` is decided through the sufficient condition ``r + r/(2p) > 1``,
    i.e. ``r > 2p/(2p+1)``; ``t3_integral_diagnostic`` offers a numerical look.
    """
    if problem.p is None:
        raise ContractError("problem carries no error-bound exponent p")
    thr = tuning_threshold(problem.p)
    messages = []
    if tik.kind == "off":
        t1, t2, t3, strict = True, False, True, False
        messages.append("tikhonov off: int eps dt = 0, so T2 fails")
    else:
        t1 = True
        t2 = tik.r <= 1
        strict = thr < tik.r <= 1
        t3 = strict
        if not strict:
            messages.append(
                f"strict tuning r > 2p/(2p+1) violated: r={tik.r:g}, 2p/(2p+1)={thr:.6g} (p={problem.p:g})"
            )
    sq = noise.square_integrable
    if not sq:
        messages.append("sigma_inf is not square integrable (constant noise or alpha <= 1)")
    return AdmissibilityReport(
        T1=t1,
        T2=t2,
        T3=t3,
        noise_square_integrable=sq,
        noise_nonincreasing=True,
        strict_tuning=strict,
        threshold=thr,
        messages=tuple(messages),
    )


def t3_integral_diagnostic(tik, problem, t_max=1e8, n_points=400):
    """Partial integrals of ``eps(t) (|x*|^2 - |x_eps(t)|^2)`` on a log grid.

    Returns ``(times, cumulative)``; a plateau indicates a finite integral.
    Needs a problem with a closed-form Tikhonov map.
    """
    from .problems import tikhonov_point

    if not tik.active:
        t = np.geomspace(tik.t0, t_max, n_points)
        return t, np.zeros_like(t)
    t = np.geomspace(tik.t0, t_max, n_points)
    ns = float(problem.x_star @ problem.x_star)
    vals = np.empty_like(t)
    for i, ti in enumerate(t):
        e = float(epsilon(tik, ti))
        x = tikhonov_point(problem, e).point
        vals[i] = e * (ns - float(x @ x))
    # trapezoid in log t: int f dt = int f t dlog t
    integrand = vals * t
    cumulative = np.concatenate([[0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(np.log(t)))])
    return t, cumulative
