"""JIT switch for the hot kernels.

Set ``SYNCAIMD_DISABLE_NUMBA=1`` (or numba's own ``NUMBA_DISABLE_JIT=1``) to
run every kernel as plain numpy code. The flag is read once at import time.
"""

import os

_FALSY = ("", "0", "false", "no", "off")


def _flag(name):
    return os.environ.get(name, "").strip().lower() not in _FALSY


NUMBA_REQUESTED = not (_flag("SYNCAIMD_DISABLE_NUMBA") or _flag("NUMBA_DISABLE_JIT"))

try:
    if not NUMBA_REQUESTED:
        raise ImportError
    import numba

    USE_NUMBA = True
except ImportError:
    numba = None
    USE_NUMBA = False

BACKEND = "numba" if USE_NUMBA else "numpy"


def jit(func):
    """Compile ``func`` in nopython mode when numba is enabled, else return it unchanged."""
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    return func
