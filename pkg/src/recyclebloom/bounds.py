"""N-bounded false-positive formulas and their inversion into capacities.

All three rates are built from the classic per-message estimate
``f(n) = (1 - (1 - 1/M)^(k n))^k``, the false-positive probability of the
message that arrives after ``n`` insertions.  In a cycle of ``N`` messages
the ``i``-th message sees ``f_i = f(i - 1)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .core import InvalidParameterError

__all__ = [
    "Bound",
    "BoundReport",
    "DegenerateBoundError",
    "DEFAULT_CAP",
    "worst_case_fp",
    "optimal_k",
    "per_insert_fp",
    "oracle_avg_fp",
    "average_case_fp",
    "bound_report",
    "max_messages",
]

DEFAULT_CAP = 2**20


class DegenerateBoundError(ArithmeticError):
    """Some message in the cycle is a certain false positive."""


class Bound(enum.Enum):
    WORST_CASE = "worst"
    AVERAGE_CASE = "average"
    ORACLE = "oracle"


@dataclass(frozen=True, eq=False)
class BoundReport:
    """Rates for one ``(M, k, N)``.

    ``f_w`` is the rate of the message arriving after all ``N`` insertions.
    ``f_o`` and ``f_a`` average over the ``N`` messages of a cycle, and
    ``per_insert[i-1]`` is the ``f_i`` they are built from.
    """

    M: int
    k: int
    n_or_N: int
    f_w: float
    f_o: float
    f_a: float
    per_insert: np.ndarray = field(repr=False)

    @property
    def average_is_tighter(self) -> bool:
        return self.f_a >= self.f_o


def _validate(M: int, k: int) -> None:
    if M < 1:
        raise InvalidParameterError(f"M must be >= 1, got {M}")
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")


def _fp(M: int, k: int, n):
    n = np.asarray(n, dtype=float)
    if M == 1:
        return np.where(n > 0, 1.0, 0.0)
    # 1 - (1 - 1/M)^(kn) without cancellation for small kn/M
    filled = -np.expm1(k * n * math.log1p(-1.0 / M))
    return filled**k


def worst_case_fp(M: int, k: int, n: int) -> float:
    """False-positive probability of the message arriving after ``n`` insertions."""
    _validate(M, k)
    if n < 0:
        raise InvalidParameterError(f"n must be >= 0, got {n}")
    return float(_fp(M, k, n))


def optimal_k(M: int, n: int) -> int:
    """Integer hash count nearest ``(M/n) ln 2`` that minimizes :func:`worst_case_fp`."""
    if n < 1:
        raise InvalidParameterError(f"n must be >= 1, got {n}")
    ideal = M / n * math.log(2)
    candidates = {max(1, math.floor(ideal)), max(1, math.ceil(ideal))}
    return min(sorted(candidates), key=lambda k: worst_case_fp(M, k, n))


def per_insert_fp(M: int, k: int, N: int) -> np.ndarray:
    """``f_1 .. f_N`` with ``f_i = worst_case_fp(M, k, i - 1)``."""
    _validate(M, k)
    if N < 1:
        raise InvalidParameterError(f"N must be >= 1, got {N}")
    return _fp(M, k, np.arange(N))


def oracle_avg_fp(M: int, k: int, N: int) -> float:
    """Average rate when exactly ``N`` new messages are inserted per cycle."""
    return float(per_insert_fp(M, k, N).mean())


def _odds(f: np.ndarray) -> np.ndarray:
    if np.any(f >= 1.0):
        raise DegenerateBoundError("a message in the cycle is a certain false positive")
    return f / (1.0 - f)


def average_case_fp(M: int, k: int, N: int) -> float:
    """Lower bound for a real user who counts only bit-setting messages.

    Between consecutive bit-setting messages, ``f_i / (1 - f_i)`` false
    positives arrive on average; the rate is their share of all arrivals.
    """
    x = _odds(per_insert_fp(M, k, N))
    return float(x.sum() / (N + x.sum()))


def bound_report(M: int, k: int, N: int) -> BoundReport:
    f = per_insert_fp(M, k, N)
    x = _odds(f)
    return BoundReport(
        M=M,
        k=k,
        n_or_N=N,
        f_w=worst_case_fp(M, k, N),
        f_o=float(f.mean()),
        f_a=float(x.sum() / (N + x.sum())),
        per_insert=f,
    )


def _curve(bound: Bound, M: int, k: int, N: int) -> np.ndarray:
    """The bound for every cycle length ``1..N``."""
    f = per_insert_fp(M, k, N)
    if bound is Bound.WORST_CASE:
        return f
    n = np.arange(1, N + 1)
    if bound is Bound.ORACLE:
        return np.cumsum(f) / n
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.cumsum(np.where(f < 1.0, f / (1.0 - f), np.inf))
        out = x / (n + x)
    # past the first certain false positive the bound is undefined: infeasible
    return np.where(np.isfinite(x), out, np.inf)


def max_messages(
    bound: Bound, M: int, k: int, target: float, *, cap: int = DEFAULT_CAP
) -> int:
    """Largest cycle length ``N`` whose bound stays at or below ``target``.

    The worst-case rule caps the rate of the last (``N``-th) message; the
    other two cap the cycle average.  All three are nondecreasing in ``N``,
    so the answer is found by doubling until the bound is exceeded and
    then locating the first exceedance on the evaluated curve.  Returns
    ``cap`` if the bound never exceeds ``target`` below it.
    """
    bound = Bound(bound)
    _validate(M, k)
    if not target > 0.0:
        raise InvalidParameterError(f"target must be > 0, got {target}")
    if target >= 1.0:
        return cap
    hi = 1
    while hi < cap:
        nxt = min(2 * hi, cap)
        if _curve(bound, M, k, nxt)[-1] > target:
            hi = nxt
            break
        hi = nxt
    exceeded = _curve(bound, M, k, hi) > target
    if not exceeded.any():
        return hi
    return int(np.argmax(exceeded))
