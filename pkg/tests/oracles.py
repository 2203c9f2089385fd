"""Independent reference computations used by the tests.

Nothing here shares code with the package: transition tables come from
enumerating every hash outcome, stationary distributions from repeated
squaring of the dense chain.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _outcomes(M: int, k: int, colliding: bool) -> tuple[np.ndarray, np.ndarray]:
    """All equally likely hash tuples, as (distinct sorted values, weight)."""
    if colliding:
        tuples = itertools.product(range(M), repeat=k)
    else:
        tuples = itertools.permutations(range(M), k)
    rows = [tuple(sorted(set(t))) for t in tuples]
    width = k
    vals = np.full((len(rows), width), M, dtype=np.int64)  # M pads short rows
    for r, t in enumerate(rows):
        vals[r, : len(t)] = t
    return vals, np.full(len(rows), 1.0 / len(rows))


def enumerated_table(M: int, k: int, sigma: int, colliding: bool, retaining: bool) -> np.ndarray:
    """Dense (sigma+1)^2 chain with bits ``0..i-1`` standing for state ``i``.

    Retaining re-inserts an overflowing message as an independent fresh
    draw into the empty filter; a re-draw that itself overflows is dropped.
    """
    vals, w = _outcomes(M, k, colliding)
    n = sigma + 1
    P = np.zeros((n, n))
    distinct = (vals < M).sum(axis=1)
    from_empty = np.zeros(n)
    spill_empty = 0.0
    for d, p in zip(distinct, w):
        if d <= sigma:
            from_empty[d] += p
        else:
            spill_empty += p
    for i in range(n):
        new = ((vals >= i) & (vals < M)).sum(axis=1)
        for d, p in zip(new, w):
            j = i + d
            if j <= sigma:
                P[i, j] += p
            elif retaining:
                P[i, :] += p * from_empty
                P[i, 0] += p * spill_empty
            else:
                P[i, 0] += p
    return P


def enumerated_rho(M: int, k: int, sigma: int, colliding: bool) -> np.ndarray:
    vals, w = _outcomes(M, k, colliding)
    top = np.where(vals < M, vals, -1).max(axis=1)
    return np.array([w[top < i].sum() for i in range(sigma + 1)])


def stationary(P: np.ndarray, squarings: int = 80) -> np.ndarray:
    """Fixed point of the lazy chain ``(P + I) / 2`` by repeated squaring.

    Every chain built above has a single recurrent class (it always
    returns through small states), so all rows converge to the same vector.
    """
    Q = 0.5 * (P + np.eye(P.shape[0]))
    for _ in range(squarings):
        Q = Q @ Q
        Q /= Q.sum(axis=1, keepdims=True)
    return Q[0]


def stationary_power(P: np.ndarray, tol: float = 1e-15, max_iter: int = 200_000) -> np.ndarray:
    """Plain power iteration on the lazy chain, for cross-checking ``stationary``."""
    x = np.full(P.shape[0], 1.0 / P.shape[0])
    Q = 0.5 * (P + np.eye(P.shape[0]))
    for _ in range(max_iter):
        y = x @ Q
        if np.abs(y - x).max() < tol:
            return y
        x = y
    return x


def closed_form_k1_mp(M: int, sigma: int, dps: int = 40):
    import mpmath as mp

    with mp.workdps(dps):
        H = mp.fsum(mp.mpf(1) / (M - j) for j in range(sigma + 1))
        return mp.fsum(mp.mpf(i) / (M * (M - i) * H) for i in range(sigma + 1))


def worst_case_mp(M: int, k: int, n: int, dps: int = 50):
    import mpmath as mp

    with mp.workdps(dps):
        return (1 - (1 - mp.mpf(1) / M) ** (k * n)) ** k
