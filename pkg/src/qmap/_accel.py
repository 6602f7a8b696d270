"""Numba switch.

Hot kernels come in two flavours: an explicit-loop version compiled with
``numba.njit`` and a vectorised numpy version.  ``QMAP_NUMBA=0`` in the
environment (or numba being absent) selects the numpy path everywhere.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _env_enabled() -> bool:
    flag = os.environ.get("QMAP_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and _env_enabled()


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)
