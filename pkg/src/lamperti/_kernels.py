"""Hot loops of the two samplers, compiled with numba.

Each replica owns an MT19937 stream seeded with uint32(base + r); reseeding
happens at the top of the replica body, so results are independent of prange
scheduling and of the worker count.  Draw order within a replica is part of
the reproducibility contract and must not be reordered.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

# membership primitive codes shared with the wrappers
PRIM_WEAK = 0  # no upcrossings at x descend from loops at x-1
PRIM_PAIR = 1  # previous upcrossings == t1 and current == t2
PRIM_UPCROSS = 2  # current upcrossings == t1


@njit(cache=True, parallel=True)
def branch_counts(
    seeds,  # uint32[R]
    n,  # int64, last site
    inv_d0,  # float64, 1/D(0)
    loop_prob,  # float64[n+1], B_x = p_x (1 - 1/D(x))
    checkpoints,  # int64[nc], ascending, last == n
    prim_code,  # int64[P]
    prim_t1,  # int64[P]
    prim_t2,  # int64[P]
    prim_owner,  # int64[P]
    n_kinds,  # int64
):
    reps = seeds.size
    nc = checkpoints.size
    nprim = prim_code.size
    counts = np.zeros((reps, nc, n_kinds), dtype=np.int64)
    for r in prange(reps):
        np.random.seed(seeds[r])
        acc = np.zeros(n_kinds, dtype=np.int64)
        up_prev = np.random.geometric(inv_d0)  # upcrossings at site 0
        ci = 0
        for x in range(1, n + 1):
            b = loop_prob[x]
            k = up_prev - 1
            inherited = 0
            if k > 0:
                lam = np.random.gamma(k, b / (1.0 - b))
                inherited = np.random.poisson(lam)
            fresh = np.random.geometric(1.0 - b) - 1
            up = inherited + fresh + 1
            for t in range(nprim):
                code = prim_code[t]
                if code == PRIM_WEAK:
                    hit = inherited == 0
                elif code == PRIM_PAIR:
                    hit = up_prev == prim_t1[t] and up == prim_t2[t]
                else:
                    hit = up == prim_t1[t]
                if hit:
                    acc[prim_owner[t]] += 1
            if ci < nc and x == checkpoints[ci]:
                for j in range(n_kinds):
                    counts[r, ci, j] = acc[j]
                ci += 1
            up_prev = up
    return counts


@njit(cache=True, parallel=True)
def walk_tallies(
    seeds,  # uint32[R]
    n,  # int64, observation range
    horizon,  # int64, absorbing site
    p,  # float64[horizon], up-probabilities for x = 0..horizon-1
    budget,  # int64, per-replica step cap
):
    reps = seeds.size
    xi = np.zeros((reps, n + 1), dtype=np.int64)
    xi_up = np.zeros((reps, n + 1), dtype=np.int64)
    first_hit = np.full((reps, n + 2), -1, dtype=np.int64)
    last_visit = np.full((reps, n + 1), -1, dtype=np.int64)
    steps = np.zeros(reps, dtype=np.int64)
    exceeded = np.zeros(reps, dtype=np.uint8)
    for r in prange(reps):
        np.random.seed(seeds[r])
        x = 0
        t = 0
        xi[r, 0] = 1
        first_hit[r, 0] = 0
        last_visit[r, 0] = 0
        while x != horizon:
            if np.random.random() < p[x]:
                if x <= n:
                    xi_up[r, x] += 1
                x += 1
            else:
                x -= 1
            t += 1
            if x <= n + 1:
                if first_hit[r, x] < 0:
                    first_hit[r, x] = t
                if x <= n:
                    last_visit[r, x] = t
                    xi[r, x] += 1
            if t >= budget:
                exceeded[r] = 1
                break
        steps[r] = t
    return xi, xi_up, first_hit, last_visit, steps, exceeded
