"""Kernel backend selection.

The path simulator has two implementations: a numba-compiled per-path loop
and a pure-numpy loop vectorized across paths. ``SDIFLOW_BACKEND`` picks one
(``numba`` or ``numpy``); without the variable numba is used when importable.
"""
import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAS_NUMBA = False

ENV_VAR = "SDIFLOW_BACKEND"
BACKENDS = ("numba", "numpy")


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if HAS_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def active_backend(requested=None):
    name = requested or os.environ.get(ENV_VAR, "").strip().lower() or "numba"
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")
    if name == "numba" and not HAS_NUMBA:
        return "numpy"
    return name

