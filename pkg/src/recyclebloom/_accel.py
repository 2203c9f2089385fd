"""JIT switch for the numeric kernels.

Kernels are written once as plain Python over numpy arrays and compiled with
numba when it is importable and ``RECYCLEBLOOM_NO_JIT`` is unset (or ``0``).
Setting ``RECYCLEBLOOM_NO_JIT=1`` runs every kernel through the interpreter,
which is slow but makes the numeric paths debuggable and lets the benchmark
compare both.
"""

from __future__ import annotations

import os

_FLAG = os.environ.get("RECYCLEBLOOM_NO_JIT", "").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError
    import numba as _numba
except ImportError:
    _numba = None

JIT_ENABLED = _numba is not None


def jit(fn):
    """Compile ``fn`` in nopython mode when JIT is enabled.

    The original function stays reachable as ``fn.py_func`` either way.
    """
    if JIT_ENABLED:
        return _numba.njit(cache=True, nogil=True)(fn)
    fn.py_func = fn
    return fn
