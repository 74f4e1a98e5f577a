"""Numba switch.

The hot kernels in :mod:`entcrb.kernels` exist twice: a numba ``@njit`` build
and a pure-numpy build producing identical output. The numba path is used
when numba imports cleanly, unless ``ENTCRB_DISABLE_NUMBA`` is set to a truthy
value before the package is imported.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None

_flag = os.environ.get("ENTCRB_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = HAVE_NUMBA and _flag not in ("1", "true", "yes", "on")


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True)(func)
