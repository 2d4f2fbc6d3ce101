"""
Optional numba acceleration.

Set ``NFCAL_DISABLE_NUMBA=1`` to force the pure-numpy kernels, e.g. for
debugging or on platforms where numba is unavailable.
"""
import os

_disabled = os.environ.get("NFCAL_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _disabled:
        raise ImportError("numba disabled by NFCAL_DISABLE_NUMBA")
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrapper(func):
            return func

        return wrapper

    prange = range


def backend():
    return "numba" if HAVE_NUMBA else "numpy"
