"""Optional numba acceleration.

Kernels in :mod:`viewsim.kernels` are written once as plain Python loops and
compiled with ``numba.njit`` when numba is importable.  Setting the
environment variable ``VIEWSIM_DISABLE_NUMBA=1`` (before import) selects the
vectorised numpy fallbacks instead.
"""

import os

_DISABLED = os.environ.get("VIEWSIM_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError("disabled by VIEWSIM_DISABLE_NUMBA")
    from numba import njit as _njit

    HAS_NUMBA = True
except ImportError:
    _njit = None
    HAS_NUMBA = False


def njit(func):
    """Compile ``func`` in nopython mode, or return it untouched."""
    if HAS_NUMBA:
        return _njit(cache=True, nogil=True)(func)
    return func
