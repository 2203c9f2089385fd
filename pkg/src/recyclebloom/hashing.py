"""Deterministic ideal hashing.

A message's ``k`` bit positions are drawn from a splitmix64 stream keyed on
``(seed, message_id)``.  Every hash of every message is therefore an
independent uniform draw, while a repeat of the same message always lands on
the same bits.  Colliding hashing samples with replacement; non-colliding
hashing draws a uniformly random ``k``-subset with Floyd's algorithm, which
needs no ``M``-sized scratch array.
"""

from __future__ import annotations

import numpy as np

from ._accel import JIT_ENABLED, jit

__all__ = ["draw_indices", "derive_seed", "stream_from", "next_index", "next_unit"]

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB
_INV53 = 1.0 / 9007199254740992.0

if JIT_ENABLED:
    _G = np.uint64(_GOLDEN)
    _M1 = np.uint64(_C1)
    _M2 = np.uint64(_C2)
    _S11 = np.uint64(11)
    _S27 = np.uint64(27)
    _S30 = np.uint64(30)
    _S31 = np.uint64(31)

    @jit
    def _mix(z):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        return z ^ (z >> _S31)

    @jit
    def stream_from(seed, key):
        """Stream state for ``key`` under ``seed`` (both non-negative int64)."""
        return _mix(np.uint64(seed) ^ _mix(np.uint64(key) + _G))

    @jit
    def next_unit(s):
        s = s + _G
        return s, (_mix(s) >> _S11) * _INV53

else:

    def _mix(z):
        z = ((z ^ (z >> 30)) * _C1) & _MASK
        z = ((z ^ (z >> 27)) * _C2) & _MASK
        return z ^ (z >> 31)

    def stream_from(seed, key):
        """Stream state for ``key`` under ``seed`` (both non-negative int64)."""
        return _mix(int(seed) ^ _mix((int(key) + _GOLDEN) & _MASK))

    def next_unit(s):
        s = (s + _GOLDEN) & _MASK
        return s, (_mix(s) >> 11) * _INV53


@jit
def next_index(s, n):
    """Advance stream ``s`` and return ``(s, u)`` with ``u`` uniform on ``[0, n)``."""
    s, u = next_unit(s)
    idx = int(u * n)
    if idx >= n:
        idx = n - 1
    return s, idx


@jit
def draw_indices(message_id, seed, M, k, noncolliding, out):
    """Fill ``out[:k]`` with the bit positions of ``message_id``."""
    s = stream_from(seed, message_id)
    if not noncolliding:
        for h in range(k):
            s, idx = next_index(s, M)
            out[h] = idx
        return
    filled = 0
    for j in range(M - k, M):
        s, t = next_index(s, j + 1)
        for h in range(filled):
            if out[h] == t:
                t = j
                break
        out[filled] = t
        filled += 1


def derive_seed(master: int, *keys: int) -> int:
    """Derive a child seed in ``[0, 2**63)`` from ``master`` and ``keys``."""
    z = int(master) & _MASK
    for key in keys:
        z = _mix_py(z ^ _mix_py((int(key) + _GOLDEN) & _MASK))
    return z >> 1


def _mix_py(z: int) -> int:
    z = ((z ^ (z >> 30)) * _C1) & _MASK
    z = ((z ^ (z >> 27)) * _C2) & _MASK
    return z ^ (z >> 31)
