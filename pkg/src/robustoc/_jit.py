"""Optional numba acceleration.

Set ``ROBUSTOC_NUMBA=0`` in the environment to force the pure-numpy kernels.
"""

import os

_flag = os.environ.get("ROBUSTOC_NUMBA", "1").strip().lower()
_requested = _flag not in ("0", "false", "no", "off")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _requested


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

    def wrapper(f):
        return f

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrapper
