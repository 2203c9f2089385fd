"""Exact Markov analysis of sigma-bounded recycling Bloom filters.

States are the number of set bits, ``0..sigma``.  One step of the chain is
one new message.  A :class:`TransitionTable` stores the chain in banded form:

* ``forward[i, d]`` -- probability of moving from ``i`` to ``i + d`` set bits
  without crossing ``sigma`` (zero where ``i + d > sigma``);
* ``overflow[i]`` -- probability that the message pushes the count past
  ``sigma``, which recycles the filter;
* ``reentry[j]`` -- where the chain lands after a recycle.  Non-retaining
  filters restart empty; retaining filters re-hash the triggering message
  into the empty filter, independently of the hashes that overflowed.

The full transition probability is therefore
``tau(i, j) = forward[i, j - i] + overflow[i] * reentry[j]``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import IO, Iterator

import numpy as np

from ._accel import JIT_ENABLED, jit
from .core import HashVariant, InvalidParameterError, Retention

__all__ = [
    "Variant",
    "TransitionTable",
    "SteadyState",
    "FrozenDistribution",
    "NumericalFailure",
    "build_transition_table",
    "steady_state",
    "balance_residual",
    "per_state_fp",
    "rho_vector",
    "one_phase_fp",
    "closed_form_k1",
    "expected_capacity",
    "frozen_distribution",
    "two_phase_fp",
    "sigma_fp",
    "write_table_csv",
    "write_steady_state_csv",
]


class NumericalFailure(ArithmeticError):
    """A computed distribution failed its normalization or balance check."""


class Variant(enum.Enum):
    CN = "cn"
    CR = "cr"
    NN = "nn"
    NR = "nr"

    @property
    def colliding(self) -> bool:
        return self in (Variant.CN, Variant.CR)

    @property
    def retaining(self) -> bool:
        return self in (Variant.CR, Variant.NR)

    @property
    def hash_variant(self) -> HashVariant:
        return HashVariant.COLLIDING if self.colliding else HashVariant.NONCOLLIDING

    @classmethod
    def of(cls, hash_variant: HashVariant, retention: Retention) -> "Variant":
        colliding = hash_variant is HashVariant.COLLIDING
        if retention is Retention.RETAINING:
            return cls.CR if colliding else cls.NR
        return cls.CN if colliding else cls.NN


@dataclass(frozen=True, eq=False)
class TransitionTable:
    variant: Variant
    M: int
    k: int
    sigma: int
    forward: np.ndarray
    overflow: np.ndarray
    reentry: np.ndarray

    @property
    def n_states(self) -> int:
        return self.sigma + 1

    def tau(self, i: int, j: int) -> float:
        p = 0.0
        d = j - i
        if 0 <= d <= self.k and j <= self.sigma:
            p += self.forward[i, d]
        if j < self.reentry.size:
            p += self.overflow[i] * self.reentry[j]
        return float(p)

    def dense(self) -> np.ndarray:
        """Full ``(sigma+1, sigma+1)`` row-stochastic matrix.  For debugging and tests."""
        n = self.n_states
        P = np.zeros((n, n))
        rows = np.arange(n)
        for d in range(self.k + 1):
            ok = rows + d < n
            P[rows[ok], rows[ok] + d] += self.forward[ok, d]
        P[:, : self.reentry.size] += np.outer(self.overflow, self.reentry)
        return P

    def entries(self) -> Iterator[tuple[int, int, float]]:
        """Nonzero ``(i, j, tau)`` triples in row-major order."""
        for i in range(self.n_states):
            row = {}
            for d in range(self.k + 1):
                if i + d <= self.sigma and self.forward[i, d] != 0.0:
                    row[i + d] = row.get(i + d, 0.0) + float(self.forward[i, d])
            if self.overflow[i] != 0.0:
                for j, r in enumerate(self.reentry):
                    if r != 0.0:
                        row[j] = row.get(j, 0.0) + float(self.overflow[i] * r)
            for j in sorted(row):
                yield i, j, row[j]


@dataclass(frozen=True, eq=False)
class SteadyState:
    pi: np.ndarray
    variant: Variant
    M: int
    k: int
    sigma: int


@dataclass(frozen=True, eq=False)
class FrozenDistribution:
    """Bits set in the frozen array of a two-phase filter, over ``[start, sigma]``."""

    start: int
    F: np.ndarray

    @property
    def states(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.F.size)


def _check(M: int, k: int, sigma: int) -> None:
    if M < 1:
        raise InvalidParameterError(f"M must be >= 1, got {M}")
    if not 1 <= k <= M:
        raise InvalidParameterError(f"k must lie in [1, M={M}], got {k}")
    if not 0 <= sigma < M:
        raise InvalidParameterError(f"sigma must lie in [0, M-1={M - 1}], got {sigma}")


# ---------------------------------------------------------------------------
# transition recursion
# ---------------------------------------------------------------------------


@jit
def _levels_loop(M, k, sigma, noncolliding, fwd, ovf):
    for level in range(1, k + 1):
        off = level - 1 if noncolliding else 0
        denom = float(M - off)
        for i in range(sigma + 1):
            ds = sigma - i
            if ds <= level - 1:
                ovf[i] += fwd[i, ds] * (M - sigma) / denom
            top = min(level, ds)
            for d in range(top, -1, -1):
                j = i + d
                hit = j - off
                v = fwd[i, d] * hit / denom if hit > 0 else 0.0
                if d > 0:
                    v += fwd[i, d - 1] * (M - j + 1) / denom
                fwd[i, d] = v


def _levels_numpy(M, k, sigma, noncolliding, fwd, ovf):
    n = sigma + 1
    rows = np.arange(n)
    J = rows[:, None] + np.arange(k + 1)[None, :]
    valid = J <= sigma
    col = sigma - rows
    for level in range(1, k + 1):
        off = level - 1 if noncolliding else 0
        denom = float(M - off)
        edge = col <= level - 1
        ovf[edge] += fwd[rows[edge], col[edge]] * (M - sigma) / denom
        new = fwd * (np.maximum(J - off, 0) / denom)
        new[:, 1:] += fwd[:, :-1] * ((M - J[:, 1:] + 1) / denom)
        new[~valid] = 0.0
        fwd[...] = new


_levels = _levels_loop if JIT_ENABLED else _levels_numpy


def build_transition_table(variant: Variant, M: int, k: int, sigma: int) -> TransitionTable:
    """Banded transition table, built one hash function at a time.

    Each level adds one hash: it either lands on an already-set bit or sets a
    new one.  Mass that crosses ``sigma`` mid-message is folded into
    ``overflow`` immediately, since later hashes cannot undo the crossing.
    Work is ``O(sigma * k^2)`` and only the ``(sigma+1, k+1)`` band is stored.
    """
    _check(M, k, sigma)
    variant = Variant(variant)
    fwd = np.zeros((sigma + 1, k + 1))
    fwd[:, 0] = 1.0
    ovf = np.zeros(sigma + 1)
    _levels(M, k, sigma, not variant.colliding, fwd, ovf)
    if variant.retaining:
        width = min(k, sigma) + 1
        reentry = np.zeros(width)
        reentry[:width] += fwd[0, :width]
        # a retained message that alone exceeds sigma leaves the filter empty
        reentry[0] += ovf[0]
    else:
        reentry = np.ones(1)
    for a in (fwd, ovf, reentry):
        a.setflags(write=False)
    return TransitionTable(variant, M, k, sigma, fwd, ovf, reentry)


# ---------------------------------------------------------------------------
# steady state
# ---------------------------------------------------------------------------


@jit
def _forward_balance_loop(fwd, reentry, g):
    n, kp1 = fwd.shape
    for i in range(n):
        acc = reentry[i] if i < reentry.size else 0.0
        for d in range(1, min(kp1 - 1, i) + 1):
            acc += g[i - d] * fwd[i - d, d]
        g[i] = acc / (1.0 - fwd[i, 0])


def _forward_balance_numpy(fwd, reentry, g):
    n, kp1 = fwd.shape
    k = kp1 - 1
    # diag[i, d-1] = fwd[i-d, d]: probability of arriving at i with a jump of d
    diag = np.zeros((n, k))
    for d in range(1, min(k, n - 1) + 1):
        diag[d:, d - 1] = fwd[: n - d, d]
    stay = 1.0 - fwd[:, 0]
    r = np.zeros(n)
    m = min(n, reentry.size)
    r[:m] = reentry[:m]
    for i in range(n):
        w = min(k, i)
        acc = r[i]
        if w:
            acc += g[i - w : i][::-1] @ diag[i, :w]
        g[i] = acc / stay[i]


_forward_balance = _forward_balance_loop if JIT_ENABLED else _forward_balance_numpy


@jit
def _basis_propagate(fwd, C):
    """Express every state above the basis as a combination of basis states."""
    n, kp1 = fwd.shape
    B = C.shape[1]
    for i in range(B, n):
        for d in range(1, min(kp1 - 1, i) + 1):
            w = fwd[i - d, d]
            if w != 0.0:
                for b in range(B):
                    C[i, b] += C[i - d, b] * w
        s = 1.0 - fwd[i, 0]
        for b in range(B):
            C[i, b] /= s


def _solve_retaining(table: TransitionTable) -> np.ndarray:
    """Steady state of a retaining chain by eliminating down to the reentry states.

    States above ``k`` receive mass only from below, so each is a fixed
    nonnegative combination of the ``min(k, sigma) + 1`` lowest states.  The
    balance equations of those low states (which include the backward
    transitions) plus normalization then form a small dense system.
    """
    fwd, ovf, r = table.forward, table.overflow, table.reentry
    n = table.n_states
    B = r.size
    C = np.zeros((n, B))
    C[:B] = np.eye(B)
    _basis_propagate(fwd, C)
    recycled = ovf @ C
    A = np.zeros((B + 1, B))
    for i in range(B):
        A[i] = C[i] * (1.0 - fwd[i, 0]) - r[i] * recycled
        for d in range(1, min(table.k, i) + 1):
            A[i] -= C[i - d] * fwd[i - d, d]
    A[B] = C.sum(axis=0)
    rhs = np.zeros(B + 1)
    rhs[B] = 1.0
    x, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    pi = C @ x
    # states nothing flows into (1..k-1 for non-colliding) are exactly zero,
    # not least-squares noise
    fed = np.zeros(n, dtype=bool)
    fed[:B] = r > 0.0
    for d in range(1, min(table.k, n - 1) + 1):
        fed[d:] |= fwd[: n - d, d] > 0.0
    pi[~fed] = 0.0
    return pi


def balance_residual(table: TransitionTable, pi: np.ndarray) -> np.ndarray:
    """Per-state ``pi_i - sum_j pi_j tau(j, i)``."""
    n = table.n_states
    inflow = np.zeros(n)
    for d in range(min(table.k, n - 1) + 1):
        inflow[d:] += pi[: n - d] * table.forward[: n - d, d]
    inflow[: table.reentry.size] += (pi @ table.overflow) * table.reentry
    return pi - inflow


def steady_state(table: TransitionTable, *, tol: float = 1e-9) -> SteadyState:
    """Stationary distribution of the chain.

    Non-retaining chains are solved by the forward recursion from an
    unnormalized ``g_0 = 1``; retaining chains by :func:`_solve_retaining`.
    """
    if table.variant.retaining:
        pi = _solve_retaining(table)
        pi = np.where(pi < 0.0, 0.0, pi)
    else:
        pi = np.zeros(table.n_states)
        _forward_balance(table.forward, table.reentry, pi)
    total = pi.sum()
    if not total > 0.0 or not np.isfinite(total):
        raise NumericalFailure(f"steady state normalizer is {total!r}")
    pi = pi / total
    worst = np.abs(balance_residual(table, pi)).max()
    if worst > tol:
        raise NumericalFailure(f"balance residual {worst:.3e} exceeds {tol:g}")
    pi.setflags(write=False)
    return SteadyState(pi, table.variant, table.M, table.k, table.sigma)


# ---------------------------------------------------------------------------
# false-positive rates
# ---------------------------------------------------------------------------


def per_state_fp(i: int, M: int, k: int, hash_variant: HashVariant = HashVariant.COLLIDING) -> float:
    """Probability that a fresh message matches when ``i`` of ``M`` bits are set."""
    if not 0 <= i <= M:
        raise InvalidParameterError(f"state {i} outside [0, {M}]")
    if HashVariant(hash_variant) is HashVariant.COLLIDING:
        return (i / M) ** k
    if i < k:
        return 0.0
    return math.comb(i, k) / math.comb(M, k)


def rho_vector(M: int, k: int, sigma: int, hash_variant: HashVariant = HashVariant.COLLIDING) -> np.ndarray:
    """``per_state_fp`` for every state ``0..sigma``.

    The non-colliding ratio is built incrementally with
    ``C(i+1, k) = C(i, k) (i+1) / (i+1-k)``, in log space when ``C(M, k)``
    is too large for a double.
    """
    i = np.arange(sigma + 1, dtype=float)
    if HashVariant(hash_variant) is HashVariant.COLLIDING:
        return (i / M) ** k
    rho = np.zeros(sigma + 1)
    if sigma < k:
        return rho
    steps = np.arange(k + 1, sigma + 1, dtype=float)
    ratio = steps / (steps - k)
    base = 1 / math.comb(M, k)
    if base > 0.0:
        rho[k] = base
        rho[k + 1 :] = base * np.cumprod(ratio)
    else:
        log_base = -(math.lgamma(M + 1) - math.lgamma(k + 1) - math.lgamma(M - k + 1))
        logs = np.concatenate(([log_base], log_base + np.cumsum(np.log(ratio))))
        rho[k:] = np.exp(logs)
    return rho


def one_phase_fp(steady: SteadyState, hash_variant: HashVariant | None = None) -> float:
    """Long-run false-positive rate over new arrivals, ``sum_i pi_i rho(i)``."""
    hv = steady.variant.hash_variant if hash_variant is None else HashVariant(hash_variant)
    return float(steady.pi @ rho_vector(steady.M, steady.k, steady.sigma, hv))


def closed_form_k1(M: int, sigma: int) -> float:
    """Exact one-phase rate for colliding, non-retaining, single-hash filters."""
    _check(M, 1, sigma)
    i = np.arange(sigma + 1, dtype=float)
    harmonic = np.sum(1.0 / (M - i))
    return float(np.sum(i / (M * (M - i) * harmonic)))


def expected_capacity(table: TransitionTable, *, strict: bool = True) -> float:
    """Expected new messages per cycle, starting from an empty filter.

    Reverse recursion over states, with overflow contributing no further
    messages.  ``strict=True`` keeps state ``sigma`` live, so a cycle ends
    only on an actual overflow and the count includes the message that
    triggers it.  ``strict=False`` stops counting once ``sigma`` bits are
    set, the literal boundary ``E[N_b] = 0`` for ``b >= sigma``.
    """
    if table.variant.retaining:
        raise InvalidParameterError("expected capacity is defined for non-retaining tables only")
    sigma, k = table.sigma, table.k
    if sigma == 0:
        # a filter that recycles on every message is defined to carry none
        return 0.0
    fwd = table.forward
    E = np.zeros(sigma + 1 + k)
    top = sigma if strict else sigma - 1
    for b in range(top, -1, -1):
        acc = 1.0
        for d in range(1, k + 1):
            if b + d <= sigma:
                acc += fwd[b, d] * E[b + d]
        E[b] = acc / (1.0 - fwd[b, 0])
    if not strict:
        E[sigma:] = 0.0
    return float(E[0])


def frozen_distribution(steady: SteadyState, table: TransitionTable) -> FrozenDistribution:
    """Bits set in the array that was just frozen, weighted by swap frequency."""
    if table.variant.retaining:
        raise InvalidParameterError("frozen distribution assumes a non-retaining table")
    start = max(0, table.sigma - table.k + 1)
    weight = steady.pi[start:] * table.overflow[start:]
    total = weight.sum()
    if not total > 0.0:
        raise NumericalFailure("no state can overflow; frozen distribution undefined")
    F = weight / total
    F.setflags(write=False)
    return FrozenDistribution(start, F)


def two_phase_fp(
    steady: SteadyState, frozen: FrozenDistribution, hash_variant: HashVariant | None = None
) -> float:
    """A fresh message is a false positive if either array matches it."""
    hv = steady.variant.hash_variant if hash_variant is None else HashVariant(hash_variant)
    rho = rho_vector(steady.M, steady.k, steady.sigma, hv)
    active = float(steady.pi @ rho)
    frozen_term = float(frozen.F @ rho[frozen.start :])
    return 1.0 - (1.0 - active) * (1.0 - frozen_term)


def sigma_fp(variant: Variant, M: int, k: int, sigma: int, *, phases: int = 1) -> float:
    """One- or two-phase long-run rate in one call.

    For ``phases=2``, ``M`` is the size of each array.
    """
    table = build_transition_table(variant, M, k, sigma)
    steady = steady_state(table)
    if phases == 1:
        return one_phase_fp(steady)
    return two_phase_fp(steady, frozen_distribution(steady, table))


# ---------------------------------------------------------------------------
# CSV dumps
# ---------------------------------------------------------------------------


def write_table_csv(table: TransitionTable, fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["i", "j", "tau"])
    for i, j, p in table.entries():
        w.writerow([i, j, f"{p:.12g}"])


def write_steady_state_csv(steady: SteadyState, fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["i", "pi"])
    for i, p in enumerate(steady.pi):
        w.writerow([i, f"{p:.12g}"])
