"""Recycling Bloom filter data structures.

The bit arrays live in a ``(2, M)`` uint8 matrix so that one-phase and
two-phase filters share the same kernels; a one-phase filter simply never
touches row 1.  The array-level kernels at the bottom of this module are the
single source of truth for insertion semantics and are reused verbatim by the
simulator's epoch loop.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ._accel import jit
from .hashing import draw_indices

__all__ = [
    "HashVariant",
    "Retention",
    "Phases",
    "SigmaBounded",
    "NBounded",
    "FilterParams",
    "HashAssignment",
    "FilterState",
    "InsertOutcome",
    "InvalidParameterError",
    "hash_indices",
    "insert",
    "query",
]


class InvalidParameterError(ValueError):
    """Raised when a parameter combination violates a filter invariant."""


class HashVariant(enum.Enum):
    COLLIDING = "colliding"
    NONCOLLIDING = "noncolliding"


class Retention(enum.Enum):
    RETAINING = "retaining"
    NONRETAINING = "nonretaining"


class Phases(enum.Enum):
    ONE = 1
    TWO = 2


@dataclass(frozen=True)
class SigmaBounded:
    """Recycle as soon as an insertion would push the bit count above ``sigma``."""

    sigma: int


@dataclass(frozen=True)
class NBounded:
    """Recycle after ``n`` counted insertions.

    Only bit-setting insertions count, as a real user would see them; with
    ``oracle=True`` every new message counts, including false positives.
    """

    n: int
    oracle: bool = False


Recycle = Union[SigmaBounded, NBounded]


@dataclass(frozen=True)
class FilterParams:
    M: int
    k: int
    hash_variant: HashVariant = HashVariant.COLLIDING
    retention: Retention = Retention.NONRETAINING
    recycle: Recycle = field(default_factory=lambda: SigmaBounded(0))
    phases: Phases = Phases.ONE
    insert_on_frozen_match: bool = False

    def __post_init__(self):
        if self.M < 1:
            raise InvalidParameterError(f"M must be >= 1, got {self.M}")
        width = self.array_bits
        if width < 1:
            raise InvalidParameterError(f"two-phase filter needs M >= 2, got M={self.M}")
        if not 1 <= self.k <= width:
            raise InvalidParameterError(f"k must lie in [1, {width}], got {self.k}")
        if isinstance(self.recycle, SigmaBounded):
            if not 0 <= self.recycle.sigma < width:
                raise InvalidParameterError(
                    f"sigma must lie in [0, {width - 1}], got {self.recycle.sigma}"
                )
        elif isinstance(self.recycle, NBounded):
            if self.recycle.n < 1:
                raise InvalidParameterError(f"N must be >= 1, got {self.recycle.n}")
        else:
            raise InvalidParameterError(f"unknown recycle policy {self.recycle!r}")

    @property
    def array_bits(self) -> int:
        """Bits per array: ``M`` for one phase, ``floor(M/2)`` for two."""
        return self.M if self.phases is Phases.ONE else self.M // 2

    @property
    def noncolliding(self) -> bool:
        return self.hash_variant is HashVariant.NONCOLLIDING

    @property
    def retaining(self) -> bool:
        return self.retention is Retention.RETAINING

    @property
    def two_phase(self) -> bool:
        return self.phases is Phases.TWO

    def kernel_limits(self) -> tuple[int, int, bool]:
        """``(sigma, n_limit, oracle)`` with ``-1`` marking the unused bound."""
        if isinstance(self.recycle, SigmaBounded):
            return self.recycle.sigma, -1, False
        return -1, self.recycle.n, self.recycle.oracle


@dataclass(frozen=True)
class HashAssignment:
    message_id: int
    indices: tuple[int, ...]


@dataclass(frozen=True)
class InsertOutcome:
    bits_before: int
    bits_after: int
    new_bits_set: int
    classified_repeat: bool
    triggered_recycle: bool
    is_false_positive: bool


class FilterState:
    """Mutable filter contents plus the ground-truth membership per array.

    ``members`` records which message ids each array currently represents;
    it exists only so that :func:`insert` can tell a genuine repeat from a
    false positive.
    """

    def __init__(self, params: FilterParams):
        self.params = params
        self.bits = np.zeros((2, params.array_bits), dtype=np.uint8)
        self.counts = np.zeros(2, dtype=np.int64)
        # active array, completed recycles, counted insertions this cycle
        self.ctl = np.zeros(3, dtype=np.int64)
        self.members: list[set[int]] = [set(), set()]

    @property
    def active_index(self) -> int:
        return int(self.ctl[0])

    @property
    def bits_set(self) -> int:
        return int(self.counts[self.ctl[0]])

    @property
    def cycle_count(self) -> int:
        return int(self.ctl[1])

    def knows(self, message_id: int) -> bool:
        if message_id in self.members[self.active_index]:
            return True
        return self.params.two_phase and message_id in self.members[1 - self.active_index]

    def __repr__(self):
        return (
            f"FilterState(bits_set={self.bits_set}, active={self.active_index}, "
            f"cycles={self.cycle_count})"
        )


def hash_indices(message_id: int, params: FilterParams, seed: int = 0) -> HashAssignment:
    """Bit positions for ``message_id``; identical for every call with the same seed."""
    out = np.empty(params.k, dtype=np.int64)
    draw_indices(int(message_id), int(seed) & (2**63 - 1), params.array_bits,
                 params.k, params.noncolliding, out)
    return HashAssignment(int(message_id), tuple(int(i) for i in out))


def query(state: FilterState, assignment: HashAssignment) -> bool:
    """True when every index is set in the active array (or, two-phase, the frozen one)."""
    idx = np.asarray(assignment.indices, dtype=np.int64)
    a = state.active_index
    if all_set(state.bits[a], idx, idx.size):
        return True
    return state.params.two_phase and all_set(state.bits[1 - a], idx, idx.size)


def insert(state: FilterState, assignment: HashAssignment, params: FilterParams) -> InsertOutcome:
    """Check-then-set insertion with recycling.

    A positive query is treated as a repeat and sets nothing.  For two-phase
    filters built with ``insert_on_frozen_match=True``, a message found only
    in the frozen array is still classified as a repeat but is also inserted
    into the active array, so ``new_bits_set`` can then be nonzero.
    """
    idx = np.asarray(assignment.indices, dtype=np.int64)
    mid = assignment.message_id
    a = state.active_index
    is_new = not state.knows(mid)
    in_active = bool(all_set(state.bits[a], idx, idx.size))
    sigma, n_limit, oracle = params.kernel_limits()
    code, before, after, fresh = insert_kernel(
        state.bits, state.counts, state.ctl, idx, idx.size, sigma, n_limit,
        params.retaining, params.two_phase, oracle and is_new,
        params.insert_on_frozen_match,
    )
    repeat = bool(code & REPEAT)
    recycled = bool(code & RECYCLED)
    if code & INSERTED:
        state.members[a].add(mid)
    elif repeat and is_new:
        state.members[a if in_active else 1 - a].add(mid)
    if recycled:
        if params.two_phase:
            # row a is now frozen and keeps its members; the cleared row is active
            state.members[1 - a] = set()
        else:
            state.members[0] = set()
        if code & RETAINED:
            state.members[state.active_index].add(mid)
    return InsertOutcome(
        bits_before=int(before),
        bits_after=int(after),
        new_bits_set=int(fresh),
        classified_repeat=repeat,
        triggered_recycle=recycled,
        is_false_positive=repeat and is_new,
    )


REPEAT = 1
RECYCLED = 2
RETAINED = 4
INSERTED = 8


@jit
def all_set(row, idx, k):
    for h in range(k):
        if row[idx[h]] == 0:
            return False
    return True


@jit
def count_new(row, idx, k):
    """Distinct positions of ``idx[:k]`` that are still unset in ``row``."""
    d = 0
    for h in range(k):
        p = idx[h]
        if row[p] == 0:
            dup = False
            for g in range(h):
                if idx[g] == p:
                    dup = True
                    break
            if not dup:
                d += 1
    return d


@jit
def _set_bits(row, idx, k):
    for h in range(k):
        row[idx[h]] = 1


@jit
def _recycle(bits, counts, ctl, two_phase):
    a = ctl[0]
    if two_phase:
        f = 1 - a
        bits[f, :] = 0
        counts[f] = 0
        ctl[0] = f
    else:
        bits[a, :] = 0
        counts[a] = 0
    ctl[1] += 1
    ctl[2] = 0


@jit
def insert_kernel(
    bits, counts, ctl, idx, k, sigma, n_limit, retaining, two_phase, oracle_new,
    frozen_inserts=False,
):
    """Insert one message; returns ``(code, bits_before, bits_after, new_bits)``.

    ``sigma < 0`` selects N-bounded recycling with limit ``n_limit``.
    ``oracle_new`` makes a false-positive arrival count toward ``n_limit``.
    The overflow check is strict (recycle when the count would exceed
    ``sigma``) and looks at the active array only.
    """
    a = ctl[0]
    before = counts[a]
    hit_active = all_set(bits[a], idx, k)
    hit = hit_active
    if not hit and two_phase:
        hit = all_set(bits[1 - a], idx, k)
    flag = REPEAT if hit else 0
    if hit and (hit_active or not frozen_inserts):
        code = REPEAT
        if n_limit > 0 and oracle_new:
            ctl[2] += 1
            if ctl[2] >= n_limit:
                _recycle(bits, counts, ctl, two_phase)
                code |= RECYCLED
        return code, before, counts[ctl[0]], 0
    d = count_new(bits[a], idx, k)
    if sigma >= 0 and before + d > sigma:
        _recycle(bits, counts, ctl, two_phase)
        code = RECYCLED | flag
        if retaining:
            b = ctl[0]
            d2 = count_new(bits[b], idx, k)
            if d2 <= sigma:
                _set_bits(bits[b], idx, k)
                counts[b] = d2
                code |= RETAINED
        return code, before, counts[ctl[0]], d
    _set_bits(bits[a], idx, k)
    counts[a] = before + d
    code = INSERTED | flag
    if n_limit > 0:
        ctl[2] += 1
        if ctl[2] >= n_limit:
            _recycle(bits, counts, ctl, two_phase)
            code |= RECYCLED
    return code, before, counts[ctl[0]], d
