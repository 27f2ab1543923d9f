"""Composite convex test problems ``F = f + g`` with exact oracles.

Each problem pairs a smooth part ``f`` (value/gradient) with a nonsmooth part
``g`` (value/prox/minimal-norm subgradient) and carries its minimum value, the
minimum-norm minimizer ``x*`` and, where one exists, a closed-form map
``eps -> x_eps`` onto the Tikhonov curve. All oracles accept batched inputs
with the state on the last axis.
"""
from __future__ import annotations

import dataclasses
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .errors import ContractError, SolverError

DEFAULT_DIM = 10
CERT_TOL = 1e-8
TOL_X_EPS = 1e-10
MAX_SOLVER_ITER = 10**6
# radius of the ball on which local Lipschitz constants are quoted
LOCAL_RADIUS = 10.0


# ---------------------------------------------------------------------------
# smooth parts


class ZeroSmooth:
    code = 0
    offset = 0.0

    def core(self, x):
        return np.zeros(np.shape(x)[:-1])

    def grad(self, x):
        return np.zeros_like(x, dtype=float)


@dataclasses.dataclass(frozen=True, eq=False)
class Quadratic:
    """``f(x) = 1/2 (x - z)^T Q (x - z) + offset`` with ``Q`` symmetric PSD."""

    Q: np.ndarray
    z: np.ndarray
    offset: float = 0.0
    code = 1

    def core(self, x):
        dx = np.asarray(x, dtype=float) - self.z
        return 0.5 * np.einsum("...i,ij,...j->...", dx, self.Q, dx)

    def grad(self, x):
        return (np.asarray(x, dtype=float) - self.z) @ self.Q


def _box_residual(x, lo, hi):
    x = np.asarray(x, dtype=float)
    return x - np.clip(x, lo, hi)


@dataclasses.dataclass(frozen=True, eq=False)
class DistPower:
    """``f(x) = scale * dist(x, [lo, hi])^p`` for ``p > 1``."""

    lo: np.ndarray
    hi: np.ndarray
    p: float
    scale: float = 1.0
    offset = 0.0
    code = 2

    def core(self, x):
        dist = np.linalg.norm(_box_residual(x, self.lo, self.hi), axis=-1)
        return self.scale * dist**self.p

    def grad(self, x):
        res = _box_residual(x, self.lo, self.hi)
        dist = np.linalg.norm(res, axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(dist > 0, self.scale * self.p * dist ** (self.p - 2.0), 0.0)
        return factor * res


@dataclasses.dataclass(frozen=True, eq=False)
class QuarticValley:
    """``f(x) = 1/4 (a.x - b)^4``: flat valley along the hyperplane ``a.x = b``."""

    a: np.ndarray
    b: float
    offset = 0.0
    code = 3

    def core(self, x):
        return 0.25 * (np.asarray(x, dtype=float) @ self.a - self.b) ** 4

    def grad(self, x):
        r = np.asarray(x, dtype=float) @ self.a - self.b
        return (r**3)[..., None] * self.a


# ---------------------------------------------------------------------------
# nonsmooth parts


class ZeroNonsmooth:
    code = 0

    def value(self, x):
        return np.zeros(np.shape(x)[:-1])

    def prox(self, x, step):
        return np.array(x, dtype=float)

    def min_norm_shift(self, x, v):
        return np.array(v, dtype=float)


@dataclasses.dataclass(frozen=True, eq=False)
class L1Norm:
    lam: float
    code = 1

    def value(self, x):
        return self.lam * np.abs(x).sum(axis=-1)

    def prox(self, x, step):
        x = np.asarray(x, dtype=float)
        return np.sign(x) * np.maximum(np.abs(x) - step * self.lam, 0.0)

    def min_norm_shift(self, x, v):
        """Minimal-norm element of ``v + lam * d|x|``."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        at_zero = np.sign(v) * np.maximum(np.abs(v) - self.lam, 0.0)
        return np.where(x != 0, v + self.lam * np.sign(x), at_zero)


@dataclasses.dataclass(frozen=True, eq=False)
class BoxDistance:
    """``g(x) = scale * dist(x, [lo, hi])``, the ``p = 1`` member of the family."""

    lo: np.ndarray
    hi: np.ndarray
    scale: float = 1.0
    code = 2

    def value(self, x):
        return self.scale * np.linalg.norm(_box_residual(x, self.lo, self.hi), axis=-1)

    def prox(self, x, step):
        x = np.asarray(x, dtype=float)
        res = _box_residual(x, self.lo, self.hi)
        dist = np.linalg.norm(res, axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            shrink = np.where(dist > 0, np.minimum(step * self.scale, dist) / dist, 0.0)
        return x - shrink * res

    def min_norm_shift(self, x, v):
        # exact off the boundary of the box; on it the subdifferential is a
        # truncated normal cone, which sampled points hit with probability 0
        res = _box_residual(x, self.lo, self.hi)
        dist = np.linalg.norm(res, axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = np.where(dist > 0, res / dist, 0.0)
        return np.asarray(v, dtype=float) + self.scale * unit


# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A composite test problem together with its solution data.

    ``L`` and ``mu`` are the Lipschitz constant of ``grad f`` and the
    strong-convexity modulus. For problems whose gradient is only locally
    Lipschitz, ``L`` is quoted on the ball of radius ``LOCAL_RADIUS``.
    ``p`` and ``gamma`` are the exponent and constant of the error bound
    ``F(x) - min F >= gamma * dist(x, S)^p``, valid where ``F <= min F + eb_radius``.
    """

    name: str
    dim: int
    smooth: object
    nonsmooth: object
    min_value: float
    x_star: np.ndarray
    L: float
    mu: float = 0.0
    p: Optional[float] = None
    gamma: Optional[float] = None
    eb_radius: float = np.inf
    tikhonov_map: Optional[Callable[[float], np.ndarray]] = None
    sample_solution: Optional[Callable[[np.random.Generator], np.ndarray]] = None
    dist_to_solutions: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: dict = dataclasses.field(default_factory=dict)

    # batched oracles (no shape validation; see the module-level functions)
    def f(self, x):
        return self.smooth.core(x) + self.smooth.offset

    def F(self, x):
        return self.f(x) + self.nonsmooth.value(x)

    def gap(self, x):
        """``F(x) - min F`` computed without adding then removing the offset."""
        return self.smooth.core(x) + self.nonsmooth.value(x) - self.gap_shift

    @property
    def gap_shift(self):
        return self.min_value - self.smooth.offset

    def grad_f(self, x):
        return self.smooth.grad(x)

    def prox_g(self, x, step):
        return self.nonsmooth.prox(x, step)

    def min_norm_subgradient(self, x):
        """Minimal-norm element of ``dF(x) = grad f(x) + dg(x)``."""
        return self.nonsmooth.min_norm_shift(x, self.grad_f(x))

    @property
    def is_smooth(self):
        return self.nonsmooth.code == 0

    def __repr__(self):
        return f"ProblemSpec({self.name!r}, dim={self.dim}, params={self.params})"


@dataclasses.dataclass(frozen=True)
class TikhonovPoint:
    epsilon: float
    point: np.ndarray
    objective_value: float


# ---------------------------------------------------------------------------
# contract-checked operations


def _as_state(problem, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.dim,):
        raise ContractError(f"expected a state of shape ({problem.dim},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ContractError("state must be finite")
    return x


def eval_F(problem, x):
    return float(problem.F(_as_state(problem, x)))


def grad_f(problem, x):
    return problem.grad_f(_as_state(problem, x))


def prox_g(problem, x, step):
    if not step > 0:
        raise ContractError(f"prox step must be positive, got {step}")
    return problem.prox_g(_as_state(problem, x), step)


def moreau_grad_g(problem, x, lam):
    """Gradient of the Moreau envelope of ``g``: ``(x - prox_{lam g}(x)) / lam``."""
    if not lam > 0:
        raise ContractError(f"Yosida parameter must be positive, got {lam}")
    x = _as_state(problem, x)
    return (x - problem.prox_g(x, lam)) / lam


def min_norm_solution(problem):
    return problem.x_star.copy()


def prox_residual(problem, x, step=None):
    """Fixed-point residual ``|x - prox_g(x - s grad f(x), s)|``, zero iff ``x`` is optimal."""
    if step is None:
        step = 1.0 / problem.L if np.isfinite(problem.L) and problem.L > 0 else 1.0
    x = np.asarray(x, dtype=float)
    return float(np.linalg.norm(x - problem.prox_g(x - step * problem.grad_f(x), step)))


def solve_tikhonov(problem, epsilon, x_init=None, tol=TOL_X_EPS, max_iter=MAX_SOLVER_ITER):
    """Minimize ``F + eps/2 |x|^2`` by proximal gradient with step ``1/(L + eps)``."""
    if not np.isfinite(problem.L):
        raise SolverError("gradient has no global Lipschitz constant", np.inf)
    step = 1.0 / (problem.L + epsilon)
    x = problem.x_star.copy() if x_init is None else np.array(x_init, dtype=float)
    res = np.inf
    for _ in range(max_iter):
        x_new = problem.prox_g(x - step * (problem.grad_f(x) + epsilon * x), step)
        res = float(np.linalg.norm(x_new - x))
        x = x_new
        if res <= tol:
            return x
    raise SolverError(f"Tikhonov solve for eps={epsilon:g} did not converge", res)


def tikhonov_point(problem, epsilon):
    """The unique minimizer of ``F_eps = F + (eps/2)|x|^2``."""
    if not epsilon > 0:
        raise ContractError(f"epsilon must be positive, got {epsilon}")
    if problem.tikhonov_map is not None:
        x = np.asarray(problem.tikhonov_map(epsilon), dtype=float)
    else:
        x = solve_tikhonov(problem, epsilon)
    value = float(problem.F(x)) + 0.5 * epsilon * float(x @ x)
    return TikhonovPoint(float(epsilon), x, value)


# ---------------------------------------------------------------------------
# the zoo


def _vec(v, name):
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1:
        raise ContractError(f"{name} must be a vector")
    return arr


def rank_deficient_ls(A=None, b=None, dim=None):
    """``f(x) = 1/2 |Ax - b|^2``; solutions form an affine subspace when ``A`` is singular.

    Without ``A``, builds ``diag(1, .., 1, 0, .., 0)`` (rank ``dim // 2``) and
    ``b = 2`` on the range coordinates; ``dim=2`` gives ``A = [[1,0],[0,0]], b = (2,0)``.
    """
    if A is None:
        dim = 2 if dim is None else int(dim)
        rank = max(1, dim // 2)
        A = np.diag([1.0] * rank + [0.0] * (dim - rank))
        b = np.array([2.0] * rank + [0.0] * (dim - rank)) if b is None else b
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = _vec(b, "b")
    if b.shape[0] != A.shape[0]:
        raise ContractError("A and b have incompatible shapes")
    d = A.shape[1]
    Q = A.T @ A
    x_star = np.linalg.pinv(A) @ b
    resid = A @ x_star - b
    min_value = 0.5 * float(resid @ resid)
    eig = np.linalg.eigvalsh(Q)
    L = float(eig[-1])
    positive = eig[eig > 1e-12 * max(L, 1.0)]
    mu = float(eig[0]) if eig[0] > 1e-12 * max(L, 1.0) else 0.0
    # null-space basis, used to sample other elements of the solution set
    _, s, vt = np.linalg.svd(A)
    rank = int(np.sum(s > 1e-12 * max(s.max(initial=0.0), 1.0)))
    null = vt[rank:].T
    Qz = Q @ x_star

    def x_eps(eps):
        return np.linalg.solve(Q + eps * np.eye(d), Qz)

    def sample(rng):
        return x_star + null @ rng.normal(scale=3.0, size=null.shape[1])

    def dist(x):
        dx = np.asarray(x, dtype=float) - x_star
        return np.linalg.norm(dx - (dx @ null) @ null.T, axis=-1)

    return ProblemSpec(
        name="rank_deficient_ls",
        dim=d,
        smooth=Quadratic(Q=Q, z=x_star, offset=min_value),
        nonsmooth=ZeroNonsmooth(),
        min_value=min_value,
        x_star=x_star,
        L=L,
        mu=mu,
        p=2.0,
        gamma=0.5 * float(positive.min()) if positive.size else None,
        tikhonov_map=x_eps,
        sample_solution=sample,
        dist_to_solutions=dist,
        params={"A": A.tolist(), "b": b.tolist()},
    )


def strongly_convex_quadratic(mu=1.0, center=None, dim=None):
    """``f(x) = (mu/2)|x - center|^2``."""
    mu = float(mu)
    if mu <= 0:
        raise ContractError("mu must be positive")
    if center is None:
        center = np.zeros(DEFAULT_DIM if dim is None else int(dim))
    center = _vec(center, "center")
    d = center.size

    def dist(x):
        return np.linalg.norm(np.asarray(x, dtype=float) - center, axis=-1)

    return ProblemSpec(
        name="strongly_convex_quadratic",
        dim=d,
        smooth=Quadratic(Q=mu * np.eye(d), z=center.copy(), offset=0.0),
        nonsmooth=ZeroNonsmooth(),
        min_value=0.0,
        x_star=center.copy(),
        L=mu,
        mu=mu,
        p=2.0,
        gamma=mu / 2,
        tikhonov_map=lambda eps: mu * center / (mu + eps),
        dist_to_solutions=dist,
        params={"mu": mu, "center": center.tolist()},
    )


def l1_quadratic(Q=None, c=None, lam=1.0):
    """``f(x) = 1/2 x^T Q x - c^T x`` (``Q`` positive definite) plus ``lam |x|_1``.

    With diagonal ``Q`` both ``x*`` and ``x_eps`` are soft-thresholds; otherwise
    they come from the internal proximal-gradient solver.
    """
    if Q is None:
        Q = np.diag([1.0, 1.0, 2.0, 0.5])
        c = [3.0, 0.5, -2.0, 0.2] if c is None else c
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.ndim == 2 and Q.shape[0] == 1 and Q.shape[1] > 1:
        Q = np.diag(Q[0])
    c = _vec(c, "c")
    lam = float(lam)
    d = c.size
    if Q.shape != (d, d):
        raise ContractError("Q and c have incompatible shapes")
    eig = np.linalg.eigvalsh(Q)
    if eig[0] <= 0:
        raise ContractError("Q must be positive definite")
    z = np.linalg.solve(Q, c)
    smooth = Quadratic(Q=Q, z=z, offset=-0.5 * float(c @ z))
    nonsmooth = L1Norm(lam)
    diagonal = np.allclose(Q, np.diag(np.diag(Q)))
    q = np.diag(Q)

    def soft(v, thr):
        return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)

    x_eps = (lambda eps: soft(c, lam) / (q + eps)) if diagonal else None
    spec = ProblemSpec(
        name="l1_quadratic",
        dim=d,
        smooth=smooth,
        nonsmooth=nonsmooth,
        min_value=0.0,
        x_star=np.zeros(d),
        L=float(eig[-1]),
        mu=float(eig[0]),
        p=2.0,
        gamma=float(eig[0]) / 2,
        tikhonov_map=x_eps,
        params={"Q": Q.tolist(), "c": c.tolist(), "lam": lam},
    )
    if diagonal:
        x_star = soft(c, lam) / q
    else:
        x_star = solve_tikhonov(dataclasses.replace(spec, x_star=np.zeros(d)), 0.0, tol=1e-14)
    min_value = float(smooth.core(x_star) + smooth.offset + nonsmooth.value(x_star))
    return dataclasses.replace(
        spec,
        x_star=x_star,
        min_value=min_value,
        dist_to_solutions=lambda x: np.linalg.norm(np.asarray(x, dtype=float) - x_star, axis=-1),
    )


def _ray_fraction(eps, D, p, scale):
    """Shortfall ``u`` in ``x_eps = (1 - u) x*`` for the box-distance family.

    Along the ray towards ``x*`` the projection stays at ``x*``, so
    ``F_eps((1-u)x*) = scale (uD)^p + eps/2 (1-u)^2 D^2`` with ``D = |x*|``.
    """
    if p == 1.0:
        return max(0.0, 1.0 - scale / (eps * D))

    def stationarity(u):
        return scale * p * (u * D) ** (p - 1.0) - eps * (1.0 - u) * D

    return optimize.brentq(stationarity, 0.0, 1.0, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def dist_power(lo=1.0, hi=2.0, p=2.0, scale=1.0):
    """``F(x) = scale * dist(x, S)^p`` with ``S`` the box ``[lo, hi]`` (1-D by default).

    ``p > 1`` lives in the smooth slot; ``p = 1`` is nonsmooth and is housed in
    ``g`` with its exact prox. The error bound holds globally with ``gamma = scale``.
    """
    lo = _vec(lo, "lo")
    hi = _vec(hi, "hi")
    p = float(p)
    scale = float(scale)
    if lo.shape != hi.shape or np.any(lo > hi):
        raise ContractError("box needs lo <= hi componentwise")
    if p < 1:
        raise ContractError("p must be >= 1")
    d = lo.size
    x_star = np.clip(0.0, lo, hi)
    D = float(np.linalg.norm(x_star))
    if p == 1.0:
        smooth, nonsmooth, L = ZeroSmooth(), BoxDistance(lo, hi, scale), 0.0
    else:
        smooth, nonsmooth = DistPower(lo, hi, p, scale), ZeroNonsmooth()
        if p == 2.0:
            L = 2.0 * scale
        elif p > 2.0:
            # grad norm is scale*p*dist^(p-1); bound its derivative on the ball
            reach = LOCAL_RADIUS + float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))
            L = scale * p * (p - 1.0) * reach ** (p - 2.0)
        else:
            L = np.inf  # Holder but not Lipschitz near S

    def x_eps(eps):
        if D == 0.0:
            return np.zeros(d)
        return (1.0 - _ray_fraction(eps, D, p, scale)) * x_star

    def sample(rng):
        return rng.uniform(lo, hi)

    def dist(x):
        return np.linalg.norm(_box_residual(x, lo, hi), axis=-1)

    return ProblemSpec(
        name="dist_power",
        dim=d,
        smooth=smooth,
        nonsmooth=nonsmooth,
        min_value=0.0,
        x_star=x_star,
        L=L,
        mu=0.0,
        p=p,
        gamma=scale,
        tikhonov_map=x_eps,
        sample_solution=sample,
        dist_to_solutions=dist,
        params={"lo": lo.tolist(), "hi": hi.tolist(), "p": p, "scale": scale},
    )


def quartic_valley(a=(1.0, 1.0), b=1.0):
    """``f(x) = 1/4 (a.x - b)^4``: error-bound exponent 4, Lojasiewicz exponent 3/4."""
    a = _vec(a, "a")
    b = float(b)
    d = a.size
    A2 = float(a @ a)
    if A2 == 0:
        raise ContractError("a must be nonzero")
    x_star = (b / A2) * a
    L = 3.0 * (np.sqrt(A2) * LOCAL_RADIUS + abs(b)) ** 2 * A2

    def x_eps(eps):
        if b == 0.0:
            return np.zeros(d)
        # x_eps = tau a with w = b - tau |a|^2 solving w^3 = eps (b - w) / |a|^2
        sb, mb = np.sign(b), abs(b)

        def stationarity(w):
            return w**3 - eps * (mb - w) / A2

        w = optimize.brentq(stationarity, 0.0, mb, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        return (sb * (mb - w) / A2) * a

    unit = a / np.sqrt(A2)

    def sample(rng):
        v = rng.normal(scale=3.0, size=d)
        return x_star + v - (v @ unit) * unit

    def dist(x):
        return np.abs(np.asarray(x, dtype=float) @ unit - b / np.sqrt(A2))

    return ProblemSpec(
        name="quartic_valley",
        dim=d,
        smooth=QuarticValley(a, b),
        nonsmooth=ZeroNonsmooth(),
        min_value=0.0,
        x_star=x_star,
        L=L,
        mu=0.0,
        p=4.0,
        gamma=A2**2 / 4.0,
        tikhonov_map=x_eps,
        sample_solution=sample,
        dist_to_solutions=dist,
        params={"a": a.tolist(), "b": b},
    )


PROBLEM_FACTORIES = {
    "rank_deficient_ls": rank_deficient_ls,
    "strongly_convex_quadratic": strongly_convex_quadratic,
    "l1_quadratic": l1_quadratic,
    "dist_power": dist_power,
    "quartic_valley": quartic_valley,
}


def make_problem(name, **params):
    try:
        factory = PROBLEM_FACTORIES[name]
    except KeyError:
        raise ContractError(f"unknown problem {name!r}; known: {sorted(PROBLEM_FACTORIES)}") from None
    return factory(**params)


# ---------------------------------------------------------------------------
# invariant suite


def check_invariants(problem, rng=None, n_samples=100):
    """Run the sampled invariant checks; returns a list of failure messages."""
    rng = np.random.default_rng(0) if rng is None else rng
    failures = []
    d = problem.dim
    x_star = problem.x_star

    if np.isfinite(problem.L):
        x = rng.uniform(-1, 1, size=(n_samples, d)) * LOCAL_RADIUS / np.sqrt(d)
        y = rng.uniform(-1, 1, size=(n_samples, d)) * LOCAL_RADIUS / np.sqrt(d)
        lhs = np.linalg.norm(problem.grad_f(x) - problem.grad_f(y), axis=-1)
        rhs = problem.L * np.linalg.norm(x - y, axis=-1)
        if np.any(lhs > rhs * (1 + 1e-12) + 1e-12):
            failures.append("grad f violates its Lipschitz constant")

    if prox_residual(problem, x_star) > CERT_TOL:
        failures.append("x* fails the prox fixed-point optimality test")
    if abs(float(problem.gap(x_star))) > CERT_TOL:
        failures.append("F(x*) differs from min F")

    if problem.sample_solution is not None:
        for _ in range(n_samples):
            s = problem.sample_solution(rng)
            if abs(float(problem.gap(s))) > CERT_TOL * max(1.0, float(s @ s)):
                failures.append("sampled solution is not optimal")
                break
            if np.linalg.norm(x_star) > np.linalg.norm(s) + CERT_TOL:
                failures.append("x* is not of minimal norm")
                break
    return failures


def builtin_problems(validate=True):
    """Default instances of the zoo (a)-(e), plus the p = 1 and p = 4 distance problems."""
    zoo = [
        rank_deficient_ls(),
        strongly_convex_quadratic(mu=1.0, center=np.linspace(-1.0, 1.0, DEFAULT_DIM)),
        l1_quadratic(),
        dist_power(1.0, 2.0, p=2.0),
        dist_power(1.0, 2.0, p=1.0),
        dist_power(1.0, 2.0, p=4.0),
        quartic_valley(),
    ]
    if validate:
        for problem in zoo:
            failures = check_invariants(problem)
            if failures:
                raise AssertionError(f"{problem!r}: {failures}")
    return zoo
