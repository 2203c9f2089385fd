"""Capacity planning under a false-positive target.

For a memory budget ``M`` and a target rate, the planner finds the
σ-bounded configuration that carries the most new messages per cycle and
sets it against the cycle lengths allowed by the three N-bounded rules.

Two-phase filters split ``M`` into two arrays of ``M // 2`` bits each, and
their capacity is counted per swap (one active-array cycle).  The
alternative normalization counts the messages held across both arrays,
two cycles' worth, against the single array of a one-phase filter.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import IO, Iterable, Sequence

import numpy as np

from .bounds import Bound, max_messages
from .core import InvalidParameterError, Retention
from .markov import Variant, build_transition_table, expected_capacity, sigma_fp

__all__ = [
    "CapacityPlan",
    "SigmaPlan",
    "InfeasibleTargetError",
    "DEFAULT_K_RANGE",
    "NORMALIZATIONS",
    "plan_sigma",
    "max_sigma",
    "compare_capacities",
    "one_vs_two_phase",
    "COMPARE_COLUMNS",
    "SWEEP_COLUMNS",
    "compare_row",
    "sweep_row",
    "write_rows_csv",
]

log = logging.getLogger(__name__)

DEFAULT_K_RANGE = range(1, 16)
NORMALIZATIONS = ("per_swap", "per_memory")
_SPOT_CHECKS = 9


class InfeasibleTargetError(ValueError):
    """No configuration in the search space meets the target."""


@dataclass(frozen=True)
class SigmaPlan:
    """Best σ-bounded configuration found by :func:`plan_sigma`.

    ``array_bits`` is the size of the array the chain runs on, which is
    ``M // 2`` for two-phase plans.
    """

    sigma: int
    k: int
    expected_messages: float
    fp: float
    array_bits: int
    phases: int = 1

    def __iter__(self):
        # unpacks as (sigma, k, E[N0])
        return iter((self.sigma, self.k, self.expected_messages))


@dataclass(frozen=True)
class CapacityPlan:
    """σ-bounded plan next to the three N-bounded capacities.

    Each N-bounded capacity uses its own best ``k``; ``ratios`` divides
    each by ``expected_messages_sigma``.
    """

    M: int
    target: float
    best_sigma: int
    best_k: int
    expected_messages_sigma: float
    fp_sigma: float
    n_worst: int
    n_avg: int
    n_oracle: int
    k_worst: int
    k_avg: int
    k_oracle: int
    ratios: dict = field(default_factory=dict)

    @property
    def worst_is_lowest(self) -> bool:
        return self.n_worst <= min(self.n_avg, self.n_oracle)


def _check_target(target: float) -> None:
    if not 0.0 < target < 1.0:
        raise InvalidParameterError(f"target must lie in (0, 1), got {target}")


@lru_cache(maxsize=65536)
def _fp(variant: Variant, M: int, k: int, sigma: int, phases: int) -> float:
    return sigma_fp(variant, M, k, sigma, phases=phases)


@lru_cache(maxsize=65536)
def _capacity(variant: Variant, M: int, k: int, sigma: int) -> float:
    # capacity is a non-retaining notion; retaining plans borrow the
    # counterpart with the same hash variant
    base = Variant.of(variant.hash_variant, Retention.NONRETAINING)
    return expected_capacity(build_transition_table(base, M, k, sigma))


def _is_monotone(values: Sequence[float]) -> bool:
    return all(b >= a for a, b in zip(values, values[1:]))


def max_sigma(
    variant: Variant, M: int, k: int, target: float, *, phases: int = 1
) -> int:
    """Largest ``sigma`` whose long-run rate on an ``M``-bit array is ``<= target``.

    Uses binary search when a spot check along the ``sigma`` axis finds
    the rate nondecreasing, and a linear scan otherwise.
    """
    f = lambda s: _fp(variant, M, k, s, phases)  # noqa: E731
    top = M - 1
    grid = sorted(set(np.linspace(0, top, _SPOT_CHECKS).astype(int).tolist()))
    if _is_monotone([f(s) for s in grid]):
        lo, hi = 0, top
        if f(hi) <= target:
            return hi
        # invariant: f(lo) <= target < f(hi)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if f(mid) <= target:
                lo = mid
            else:
                hi = mid
        return lo
    log.warning("rate not monotone in sigma at M=%d k=%d; scanning linearly", M, k)
    best = 0
    for s in range(top + 1):
        if f(s) <= target:
            best = s
    return best


def plan_sigma(
    M: int,
    target: float,
    k_range: Iterable[int] = DEFAULT_K_RANGE,
    *,
    variant: Variant = Variant.CN,
    phases: int = 1,
) -> SigmaPlan:
    """Search ``k_range`` for the configuration with the largest ``E[N0]``.

    Parameters
    ----------
    M : int
        Total memory in bits.  Two-phase plans use ``M // 2`` per array.
    target : float
        Upper limit on the one-phase (or two-phase) long-run rate.
    k_range : iterable of int
        Hash counts to try; values larger than the array are skipped.

    Returns
    -------
    SigmaPlan
        Unpacks as ``(sigma, k, expected_messages)``.
    """
    _check_target(target)
    variant = Variant(variant)
    if phases not in (1, 2):
        raise InvalidParameterError(f"phases must be 1 or 2, got {phases}")
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise InvalidParameterError("k_range is empty")
    array_bits = M // 2 if phases == 2 else M
    if array_bits < 1:
        raise InvalidParameterError(f"M={M} leaves no bits per array")
    best = None
    for k in ks:
        if k < 1 or k > array_bits:
            continue
        sigma = max_sigma(variant, array_bits, k, target, phases=phases)
        cap = _capacity(variant, array_bits, k, sigma)
        if best is None or cap > best.expected_messages:
            best = SigmaPlan(
                sigma=sigma,
                k=k,
                expected_messages=cap,
                fp=_fp(variant, array_bits, k, sigma, phases),
                array_bits=array_bits,
                phases=phases,
            )
    if best is None:
        raise InfeasibleTargetError(f"no k in {ks} fits an array of {array_bits} bits")
    return best


def _best_n(bound: Bound, M: int, target: float, ks: Sequence[int]) -> tuple[int, int]:
    best_n, best_k = -1, ks[0]
    for k in ks:
        n = max_messages(bound, M, k, target)
        if n > best_n:
            best_n, best_k = n, k
    return best_n, best_k


def compare_capacities(
    M: int,
    target: float,
    k_range: Iterable[int] = DEFAULT_K_RANGE,
    *,
    variant: Variant = Variant.CN,
) -> CapacityPlan:
    """σ-bounded capacity against the worst-case, average-case and oracle N."""
    ks = sorted(set(int(k) for k in k_range))
    plan = plan_sigma(M, target, ks, variant=variant)
    ks = [k for k in ks if 1 <= k <= M]
    n_w, k_w = _best_n(Bound.WORST_CASE, M, target, ks)
    n_a, k_a = _best_n(Bound.AVERAGE_CASE, M, target, ks)
    n_o, k_o = _best_n(Bound.ORACLE, M, target, ks)
    E = plan.expected_messages
    return CapacityPlan(
        M=M,
        target=target,
        best_sigma=plan.sigma,
        best_k=plan.k,
        expected_messages_sigma=E,
        fp_sigma=plan.fp,
        n_worst=n_w,
        n_avg=n_a,
        n_oracle=n_o,
        k_worst=k_w,
        k_avg=k_a,
        k_oracle=k_o,
        ratios={
            "worst": n_w / E,
            "average": n_a / E,
            "oracle": n_o / E,
        },
    )


def one_vs_two_phase(
    M: int,
    target: float,
    k_range: Iterable[int] = DEFAULT_K_RANGE,
    *,
    variant: Variant = Variant.CN,
    normalization: str = "per_swap",
) -> float:
    """Best one-phase capacity over best two-phase capacity at equal memory.

    ``per_swap`` compares messages per cycle with messages per swap.
    ``per_memory`` credits the two-phase filter with the messages held in
    both of its arrays, twice its per-swap capacity, so both designs are
    measured by what the same ``M`` bits remember.

    The ratio is ``inf`` when only the one-phase filter admits messages,
    as happens for ``M = 2`` where each two-phase array has a single bit.
    """
    one, two = _phase_plans(M, target, k_range, variant)
    return _phase_ratio(M, one, two, normalization)


def _phase_plans(M, target, k_range, variant):
    ks = sorted(set(int(k) for k in k_range))
    one = plan_sigma(M, target, ks, variant=variant, phases=1)
    two = plan_sigma(M, target, ks, variant=variant, phases=2)
    return one, two


def _phase_ratio(M: int, one: SigmaPlan, two: SigmaPlan, normalization: str) -> float:
    if normalization not in NORMALIZATIONS:
        raise InvalidParameterError(
            f"normalization must be one of {NORMALIZATIONS}, got {normalization!r}"
        )
    a, b = one.expected_messages, two.expected_messages
    if normalization == "per_memory":
        b = 2.0 * b
    if b == 0.0:
        return float("inf") if a > 0.0 else 1.0
    return a / b


# ---------------------------------------------------------------------------
# CSV rows behind the capacity figures
# ---------------------------------------------------------------------------

COMPARE_COLUMNS = (
    "M",
    "target",
    "best_sigma",
    "best_k",
    "expected_messages_sigma",
    "fp_sigma",
    "n_worst",
    "k_worst",
    "n_avg",
    "k_avg",
    "n_oracle",
    "k_oracle",
    "ratio_worst",
    "ratio_avg",
    "ratio_oracle",
)

SWEEP_COLUMNS = (
    "M",
    "target",
    "one_sigma",
    "one_k",
    "one_capacity",
    "two_array_bits",
    "two_sigma",
    "two_k",
    "two_capacity",
    "normalization",
    "ratio",
)


def compare_row(plan: CapacityPlan) -> dict:
    return {
        "M": plan.M,
        "target": plan.target,
        "best_sigma": plan.best_sigma,
        "best_k": plan.best_k,
        "expected_messages_sigma": plan.expected_messages_sigma,
        "fp_sigma": plan.fp_sigma,
        "n_worst": plan.n_worst,
        "k_worst": plan.k_worst,
        "n_avg": plan.n_avg,
        "k_avg": plan.k_avg,
        "n_oracle": plan.n_oracle,
        "k_oracle": plan.k_oracle,
        "ratio_worst": plan.ratios["worst"],
        "ratio_avg": plan.ratios["average"],
        "ratio_oracle": plan.ratios["oracle"],
    }


def sweep_row(
    M: int,
    target: float,
    k_range: Iterable[int] = DEFAULT_K_RANGE,
    *,
    variant: Variant = Variant.CN,
    normalization: str = "per_swap",
) -> dict:
    one, two = _phase_plans(M, target, k_range, variant)
    return {
        "M": M,
        "target": target,
        "one_sigma": one.sigma,
        "one_k": one.k,
        "one_capacity": one.expected_messages,
        "two_array_bits": two.array_bits,
        "two_sigma": two.sigma,
        "two_k": two.k,
        "two_capacity": two.expected_messages,
        "normalization": normalization,
        "ratio": _phase_ratio(M, one, two, normalization),
    }


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def write_rows_csv(rows: Sequence[dict], columns: Sequence[str], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
