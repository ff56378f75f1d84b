"""Step-by-step path simulator with a rigorously bounded truncation horizon.

An infinite transient path cannot be simulated, but stopping the walk at the
first visit to a horizon H changes any tally at sites <= n only if the walk
later returns below n+1, which happens with probability exactly
1 - D(n, H)/D(n).  Choosing the smallest H that pushes this below eps makes
every statistic extracted here correct up to a per-replica bias of at most
eps; statistical comparisons must budget that bias explicitly (tolerances of
the form 4 sigma + eps).

Only streaming tallies are kept per replica: first-hit and last-visit times,
visit counts and upcrossing counts per site.  A site x is a weak cutpoint
exactly when the last visit to x-1 precedes the first visit to x+1: after the
last visit to x-1 the nearest-neighbor walk steps to x and never drops below
x again, and before first hitting x+1 it has never been above x; conversely
such a time witnesses the defining ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .analytics import SetKind, lambda_const
from .branching import RNG_CONTRACT, replica_seeds
from .environment import Environment, PotentialKernel

__all__ = [
    "PathStats",
    "WalkerEnsemble",
    "StepBudgetExceeded",
    "horizon_for",
    "run_walk",
    "walk_ensemble",
    "weak_cut_indicator",
    "weak_cut_witness",
    "tallies_from_path",
    "counts_from_tallies",
]


class StepBudgetExceeded(RuntimeError):
    """A walk ran past its step budget (pathological configuration guard)."""


@dataclass(frozen=True)
class PathStats:
    """Streaming tallies of one truncated walk, valid for sites <= n."""

    n: int
    horizon: int
    truncation_eps: float
    first_hit: np.ndarray  # time of first visit, sites 0..n+1
    last_visit: np.ndarray  # time of last visit, sites 0..n
    xi: np.ndarray  # visit counts, sites 0..n
    xi_up: np.ndarray  # upcrossing counts, sites 0..n
    steps: int
    path: tuple[int, ...] | None = None


def _ensure_kernel(env: Environment, size: int, kernel: PotentialKernel | None) -> PotentialKernel:
    if kernel is not None and kernel.n_max >= size:
        return kernel
    return PotentialKernel.build(env, size)


def horizon_for(
    env: Environment, n: int, eps: float, kernel: PotentialKernel | None = None
) -> int:
    """Smallest H with 1 - D(n, H)/D(n) <= eps (return probability below eps).

    Uses 1 - D(n, H)/D(n) = prod_{i=n}^{H-1} (1 - 1/D(i)) and scans the
    cumulative log-product; for the harmonic family this lands exactly on
    ceil(n / eps).  The bound inherits the accuracy of the kernel's D table
    (exact for closed-form families; seed-limited for backward recursion), so
    minimality is meant relative to the kernel in use.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    target = math.log(eps) + 1e-12  # admit the boundary case despite rounding
    cap = max(2 * n + 2, int(n / eps) + 2)
    for _ in range(20):
        kernel = _ensure_kernel(env, cap, kernel)
        logs = np.log1p(-1.0 / kernel.d_array[n:cap])
        csum = np.cumsum(logs)
        idx = np.nonzero(csum <= target)[0]
        if idx.size:
            return n + int(idx[0]) + 1
        cap *= 2
    raise RuntimeError(f"no horizon found below {cap} for n={n}, eps={eps}")


def run_walk(
    env: Environment,
    n: int,
    eps: float,
    rng,
    keep_path: bool = False,
    horizon: int | None = None,
    step_budget: int | None = None,
) -> PathStats:
    """Simulate one walk from 0 until it first hits the horizon.

    ``rng`` needs only a ``random()`` method, so scripted fake generators can
    drive deterministic fixture paths.  This is the reference implementation;
    batch work goes through :func:`walk_ensemble`.
    """
    h = horizon_for(env, n, eps) if horizon is None else int(horizon)
    if h <= n + 1:
        raise ValueError(f"horizon {h} must exceed the observation range n+1 = {n + 1}")
    budget = 100 * h * h if step_budget is None else int(step_budget)
    p = env.p_slice(0, h)
    first_hit = np.full(n + 2, -1, dtype=np.int64)
    last_visit = np.full(n + 1, -1, dtype=np.int64)
    xi = np.zeros(n + 1, dtype=np.int64)
    xi_up = np.zeros(n + 1, dtype=np.int64)
    x = 0
    t = 0
    xi[0] = 1
    first_hit[0] = 0
    last_visit[0] = 0
    path = [0] if keep_path else None
    while x != h:
        if rng.random() < p[x]:
            if x <= n:
                xi_up[x] += 1
            x += 1
        else:
            x -= 1
        t += 1
        if keep_path:
            path.append(x)
        if x <= n + 1:
            if first_hit[x] < 0:
                first_hit[x] = t
            if x <= n:
                last_visit[x] = t
                xi[x] += 1
        if t >= budget:
            raise StepBudgetExceeded(
                f"walk exceeded {budget} steps before hitting {h} (n={n}, eps={eps})"
            )
    return PathStats(
        n=n,
        horizon=h,
        truncation_eps=eps,
        first_hit=first_hit,
        last_visit=last_visit,
        xi=xi,
        xi_up=xi_up,
        steps=t,
        path=tuple(path) if keep_path else None,
    )


def weak_cut_indicator(stats: PathStats, x: int) -> bool:
    """x is a weak cutpoint iff the last visit to x-1 precedes the first hit of x+1."""
    if not 1 <= x <= stats.n:
        raise ValueError(f"need 1 <= x <= {stats.n}, got {x}")
    return bool(stats.last_visit[x - 1] < stats.first_hit[x + 1])


def weak_cut_witness(path: Sequence[int], x: int) -> bool:
    """Direct scan for a time k with X_k = x, X_i <= x before, X_i >= x after."""
    for k, pos in enumerate(path):
        if pos != x:
            continue
        if all(p <= x for p in path[:k]) and all(p >= x for p in path[k + 1 :]):
            return True
    return False


def tallies_from_path(path: Sequence[int], n: int) -> PathStats:
    """PathStats computed from an explicit path (test fixture helper)."""
    first_hit = np.full(n + 2, -1, dtype=np.int64)
    last_visit = np.full(n + 1, -1, dtype=np.int64)
    xi = np.zeros(n + 1, dtype=np.int64)
    xi_up = np.zeros(n + 1, dtype=np.int64)
    for t, x in enumerate(path):
        if x <= n + 1 and first_hit[x] < 0:
            first_hit[x] = t
        if x <= n:
            last_visit[x] = t
            xi[x] += 1
        if t + 1 < len(path) and x <= n and path[t + 1] == x + 1:
            xi_up[x] += 1
    return PathStats(
        n=n,
        horizon=max(path),
        truncation_eps=0.0,
        first_hit=first_hit,
        last_visit=last_visit,
        xi=xi,
        xi_up=xi_up,
        steps=len(path) - 1,
        path=tuple(path),
    )


@dataclass(frozen=True)
class WalkerEnsemble:
    """Per-replica tallies and counts for a batch of truncated walks."""

    n: int
    horizon: int
    truncation_eps: float
    kinds: tuple[SetKind, ...]
    counts: np.ndarray  # int64 [n_kinds, replicas]
    steps: np.ndarray  # int64 [replicas]
    xi: np.ndarray  # int64 [replicas, n+1]
    xi_up: np.ndarray  # int64 [replicas, n+1]
    first_hit: np.ndarray  # int64 [replicas, n+2]
    last_visit: np.ndarray  # int64 [replicas, n+1]
    seed: int
    rng_contract: str = RNG_CONTRACT

    @property
    def replicas(self) -> int:
        return self.steps.size

    def counts_for(self, kind: SetKind) -> np.ndarray:
        return self.counts[self.kinds.index(kind)]

    def scaled_for(self, kind: SetKind) -> np.ndarray:
        return self.counts_for(kind) / (lambda_const(kind) * math.log(self.n))


def counts_from_tallies(
    kind: SetKind,
    xi_up: np.ndarray,
    first_hit: np.ndarray,
    last_visit: np.ndarray,
    n: int,
) -> np.ndarray:
    """|C intersect [1, n]| per replica from walker tallies (2d arrays)."""
    if kind.code == "cw":
        member = last_visit[:, 0:n] < first_hit[:, 2 : n + 2]
        return member.sum(axis=1).astype(np.int64)
    if kind.code == "cstar":
        return (xi_up[:, 1 : n + 1] == kind.up[0]).sum(axis=1).astype(np.int64)
    total = np.zeros(xi_up.shape[0], dtype=np.int64)
    for v, w in kind.components():
        member = (xi_up[:, 1 : n + 1] == w) & (xi_up[:, 0:n] == v - w + 1)
        total += member.sum(axis=1)
    return total


def walk_ensemble(
    env: Environment,
    n: int,
    eps: float,
    replicas: int,
    seed: int,
    kinds: Sequence[SetKind] = (),
    workers: int = 1,
    kernel: PotentialKernel | None = None,
    step_budget: int | None = None,
) -> WalkerEnsemble:
    """Batch of independent truncated walks (compiled inner loop).

    Same per-replica stream contract as the branching sampler: replica r is
    seeded with uint32(base + r).  Results are worker-count invariant.
    """
    if replicas < 1:
        raise ValueError(f"need replicas >= 1, got {replicas}")
    h = horizon_for(env, n, eps, kernel=kernel)
    budget = 100 * h * h if step_budget is None else int(step_budget)
    p = env.p_slice(0, h)
    seeds = replica_seeds(seed, replicas)
    from numba import get_num_threads, set_num_threads

    old = get_num_threads()
    set_num_threads(max(1, int(workers)))
    try:
        xi, xi_up, first_hit, last_visit, steps, exceeded = _kernels.walk_tallies(
            seeds, n, h, p, budget
        )
    finally:
        set_num_threads(old)
    if exceeded.any():
        bad = int(np.nonzero(exceeded)[0][0])
        raise StepBudgetExceeded(
            f"replica {bad} exceeded {budget} steps before hitting {h} (n={n}, eps={eps})"
        )
    kinds = tuple(kinds)
    counts = np.stack(
        [counts_from_tallies(kind, xi_up, first_hit, last_visit, n) for kind in kinds]
    ) if kinds else np.zeros((0, replicas), dtype=np.int64)
    return WalkerEnsemble(
        n=n,
        horizon=h,
        truncation_eps=eps,
        kinds=kinds,
        counts=counts,
        steps=steps,
        xi=xi,
        xi_up=xi_up,
        first_hit=first_hit,
        last_visit=last_visit,
        seed=int(seed),
    )
