"""Optional numba acceleration.

Every hot kernel in :mod:`sigmaq.kernels` exists twice: a loop version that
numba compiles, and a pure-numpy version. Setting ``SIGMAQ_DISABLE_NUMBA=1``
(or running without numba installed) selects the numpy versions. Both
versions consume the same pre-drawn random arrays, so results agree.
"""

from __future__ import annotations

import os

_FLAG = os.environ.get("SIGMAQ_DISABLE_NUMBA", "").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged.

    The undecorated function stays reachable as ``func.py_func`` so tests and
    the benchmark can run the interpreted loop directly.
    """
    if not USE_NUMBA:
        func.py_func = func
        return func
    return numba.njit(cache=True, nogil=True)(func)
