"""Numba dispatch.

Set ``ADQUALITY_DISABLE_JIT=1`` before import to force the pure-numpy
kernels. The flag is read once at import time.
"""

import os

_FLAG = os.environ.get("ADQUALITY_DISABLE_JIT", "").strip().lower()

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None
    HAVE_NUMBA = False

JIT_ENABLED = HAVE_NUMBA and _FLAG not in {"1", "true", "yes", "on"}


def njit(fn):
    """Compile ``fn`` with numba when available, else return it untouched."""
    if _njit is None:
        return fn
    return _njit(cache=True, nogil=True)(fn)
