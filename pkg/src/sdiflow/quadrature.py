"""Globally adaptive composite Gauss-Legendre quadrature.

Each panel is integrated with an ``n``-point rule on the whole panel and on its
two halves; the difference is the panel error estimate. The panel with the
largest estimate is halved until the summed estimate meets the tolerance.
"""
from __future__ import annotations

import heapq

import numpy as np

from .errors import QuadratureError

RTOL = 1e-9
MAX_PANELS = 2**20
N_NODES = 15

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(N_NODES)


def _rule(fn, a, b):
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return half * float(np.dot(_WEIGHTS, fn(mid + half * _NODES)))


def _panel(fn, a, b):
    m = 0.5 * (a + b)
    left, right = _rule(fn, a, m), _rule(fn, m, b)
    fine = left + right
    return fine, abs(fine - _rule(fn, a, b))


def integrate(fn, a, b, rtol=RTOL, atol=0.0, breakpoints=None, max_panels=MAX_PANELS):
    """``int_a^b fn(s) ds`` for a vectorized ``fn``.

    ``breakpoints`` seeds the initial partition (useful for integrands whose
    mass sits in a narrow region of a long interval). Raises QuadratureError
    when ``max_panels`` is reached before ``|err| <= max(atol, rtol |I|)``.
    """
    a, b = float(a), float(b)
    if b == a:
        return 0.0
    if b < a:
        return -integrate(fn, b, a, rtol, atol, breakpoints, max_panels)
    edges = [a, b] if breakpoints is None else sorted({a, b, *(float(p) for p in breakpoints if a < p < b)})
    heap = []
    total = err = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, e = _panel(fn, lo, hi)
        heapq.heappush(heap, (-e, lo, hi, val))
        total += val
        err += e
    n_panels = len(heap)
    while err > max(atol, rtol * abs(total)):
        if n_panels >= max_panels:
            raise QuadratureError(
                f"adaptive quadrature hit {max_panels} panels",
                err / abs(total) if total else np.inf,
            )
        neg_e, lo, hi, val = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            # interval cannot be split further in floating point; accept it
            raise QuadratureError("panel collapsed below floating-point resolution",
                                  err / abs(total) if total else np.inf)
        total -= val
        err += neg_e
        for p, q in ((lo, mid), (mid, hi)):
            v, e = _panel(fn, p, q)
            heapq.heappush(heap, (-e, p, q, v))
            total += v
            err += e
        n_panels += 1
    # re-sum to shed the drift of the running updates
    return float(sum(item[3] for item in heap))
