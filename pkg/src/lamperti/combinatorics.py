"""Composition counts and the k-fold logarithmic sum behind the moment method.

Two counting facts are used when assembling joint laws and moments:

* positive compositions: the number of (v_1, ..., v_j) with every v_k >= 1 and
  sum a equals C(a-1, j-1);
* padded compositions: the number of nonnegative (v_1, ..., v_j) with
  v_j >= 1, sum a, and exactly i nonzero coordinates equals
  C(j-1, i-1) * C(a-1, i-1).

The k-fold sum

    L_k(n, gap) = sum over 0 < j_1 < ... < j_k <= n, j_i - j_{i-1} >= gap
                  of 1 / (j_1 (j_2 - j_1) ... (j_k - j_{k-1}))

grows like (log n)^k and is sandwiched between (log n - log k)^k and
(k + log n)^k when gap = 1.  It is evaluated by iterated discrete convolution
in O(k n^2), never by k nested loops.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "count_strict",
    "count_padded",
    "logsum_kfold",
    "logsum_upper_bound",
    "logsum_lower_bound",
]

_KFOLD_N_CAP = 100_000  # O(k n^2) budget guard for k >= 2


def count_strict(a: int, j: int) -> int:
    """Number of compositions of a into exactly j positive parts: C(a-1, j-1)."""
    if j < 1 or a < j:
        raise ValueError(f"need a >= j >= 1, got a={a}, j={j}")
    return math.comb(a - 1, j - 1)


def count_padded(a: int, j: int, i: int) -> int:
    """Nonnegative j-tuples summing to a with v_j >= 1 and exactly i nonzero parts.

    Equals C(j-1, i-1) * C(a-1, i-1).
    """
    if i < 1 or j < i or a < i:
        raise ValueError(f"need a >= i, j >= i >= 1, got a={a}, j={j}, i={i}")
    return math.comb(j - 1, i - 1) * math.comb(a - 1, i - 1)


def logsum_kfold(n: int, k: int, gap: int = 1) -> float:
    """The gap-constrained k-fold logarithmic sum L_k(n, gap).

    Iterates g_1(j) = 1/j (j >= gap), g_{t+1} = g_t * h with h(d) = 1/d for
    d >= gap, and returns sum_j g_k(j).
    """
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    if gap < 1:
        raise ValueError(f"need gap >= 1, got {gap}")
    if n < k:
        raise ValueError(f"need n >= k, got n={n}, k={k}")
    if k >= 2 and n > _KFOLD_N_CAP:
        raise ValueError(f"n={n} exceeds the O(k n^2) budget cap {_KFOLD_N_CAP} for k >= 2")
    weights = np.zeros(n + 1)
    idx = np.arange(gap, n + 1)
    weights[idx] = 1.0 / idx
    g = weights.copy()
    for _ in range(k - 1):
        g = np.convolve(g, weights)[: n + 1]
    return float(g.sum())


def logsum_upper_bound(n: int, k: int) -> float:
    """(k + log n)^k, an upper sandwich bound valid for gap = 1."""
    return (k + math.log(n)) ** k


def logsum_lower_bound(n: int, k: int) -> float:
    """(log n - log k)^k, a lower sandwich bound valid for gap = 1."""
    return (math.log(n) - math.log(k)) ** k
