"""Backend switch for the hot loops.

Every accelerated kernel exists twice: an explicit-loop version that numba
compiles, and a vectorised numpy version. ``FRICTION_LAB_NUMBA=0`` (or a
missing numba install) routes all dispatchers to the numpy path.
"""

import os

_FLAG = os.environ.get("FRICTION_LAB_NUMBA", "1").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and _FLAG not in ("0", "false", "no", "off")


def jit(fn):
    """Compile ``fn`` in nopython mode when the numba backend is active."""
    if USE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
