"""JIT switch for the hot kernels.

Set ``NUSURROGATE_DISABLE_JIT=1`` before import to force the pure-numpy
paths. When numba is missing the numpy paths are used automatically.
"""

import os

_FLAG = os.environ.get("NUSURROGATE_DISABLE_JIT", "").strip().lower()
JIT_REQUESTED = _FLAG not in ("1", "true", "yes", "on")

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover - numba is a hard dependency
    _njit = None

JIT_ENABLED = JIT_REQUESTED and _njit is not None


def njit(func):
    """Compile ``func`` with numba, caching to disk.

    Returns ``func`` unchanged when numba is unavailable. The compiled
    kernels are only dispatched when ``JIT_ENABLED`` is true, but they are
    always built lazily so the benchmark can compare both paths.
    """
    if _njit is None:
        return func
    return _njit(cache=True, nogil=True)(func)
