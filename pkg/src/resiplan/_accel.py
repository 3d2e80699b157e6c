"""Kernel backend selection.

Hot numeric loops (the simplex pivot kernel and the outage-dynamics Euler
integrator) are compiled with numba when it is importable. Setting the
environment variable ``RESIPLAN_PURE_NUMPY=1`` forces the pure-numpy
fallback path, which runs the very same function bodies uncompiled.
``benchmarks/compare_backends.py`` times the two paths against each other.
"""

import os

PURE_NUMPY = os.environ.get("RESIPLAN_PURE_NUMPY", "0").strip().lower() in (
    "1",
    "true",
    "yes",
)

if PURE_NUMPY:
    NUMBA_ENABLED = False
else:
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - depends on environment
        NUMBA_ENABLED = False


def jit_kernel(func):
    """Compile ``func`` with numba when enabled, else return it unchanged."""
    if NUMBA_ENABLED:
        return _njit(cache=True)(func)
    return func


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
