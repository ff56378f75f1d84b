"""Exact O(n)-per-replica sampler of upcrossing counts via their branching structure.

Once the walk is transient, the upcrossing counts {xi(x,up)}_x form a Markov
chain: each of the xi(x-1,up) - 1 forward loops at x-1 contains a geometric
number of forward loops at x, the escape contributes an independent geometric
batch, and the final escape at x adds one.  All geometrics share the
parameter B_x = p_x (1 - 1/D(x)), the probability of a forward loop at x.
Splitting the new loops into those inherited from loops (Y_x) and those in
the escape (zeta_x),

    xi(x,up) = Y_x + zeta_x + 1,        x is a weak cutpoint  <=>  Y_x = 0,

which yields site memberships without ever simulating the path, with no
truncation horizon, in O(n) draws per replica.  Negative binomials are drawn
through the gamma-Poisson mixture so a step costs O(1) regardless of the
parent count.

The module also carries the generating-function view of the same chain: the
per-loop and per-escape offspring pgfs, the marginal pgf recursion, and its
closed geometric form, used as a deterministic cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .analytics import SetKind, lambda_const, weak_prob
from .environment import PotentialKernel

__all__ = [
    "GeometricParam",
    "SiteOccupancy",
    "CountSummary",
    "EnsembleCounts",
    "RNG_CONTRACT",
    "geom_param",
    "initial_occupancy",
    "step",
    "run_replica",
    "run_ensemble",
    "offspring_pgf",
    "immigration_pgf",
    "upcross_pgf_closed",
    "upcross_pgf_iterated",
    "prob_no_inherited_loops",
    "PgfReport",
    "pgf_iterate",
]

RNG_CONTRACT = f"mt19937-base+r/v1 (numpy {np.__version__})"


@dataclass(frozen=True)
class GeometricParam:
    """Forward-loop probability at a site; parameter of every offspring geometric."""

    x: int
    loop_prob: float  # p_x (1 - 1/D(x)) in (0, 1)


def geom_param(kernel: PotentialKernel, x: int) -> GeometricParam:
    b = kernel.env.p_at(x) * (1.0 - 1.0 / kernel.d_of(x))
    return GeometricParam(x=x, loop_prob=b)


@dataclass(frozen=True)
class SiteOccupancy:
    """Per-site state of the sampler: upcrossings split by their origin."""

    x: int
    up: int  # xi(x, up) >= 1
    loops_from_loops: int  # Y_x, loops inherited from loops at x-1
    loops_from_escape: int  # zeta_x, loops inside the escape from x-1

    def __post_init__(self):
        if self.loops_from_loops < 0 or self.loops_from_escape < 0:
            raise ValueError(f"negative loop counts in {self!r}")
        if self.up != self.loops_from_loops + self.loops_from_escape + 1:
            raise ValueError(f"up != Y + zeta + 1 in {self!r}")

    def local_time_given(self, prev_up: int) -> int:
        """xi(x) = xi(x-1,up) + xi(x,up) - 1: every non-final upcrossing returns."""
        return prev_up + self.up - 1

    @property
    def is_weak_cutpoint(self) -> bool:
        return self.loops_from_loops == 0


def initial_occupancy(kernel: PotentialKernel, rng: np.random.Generator) -> SiteOccupancy:
    """Occupancy at site 0: p_0 = 1, so xi(0,up) is geometric with mean D(0)."""
    up0 = int(rng.geometric(1.0 / kernel.d_of(0)))
    return SiteOccupancy(x=0, up=up0, loops_from_loops=0, loops_from_escape=up0 - 1)


def step(
    kernel: PotentialKernel, prev: SiteOccupancy, x: int, rng: np.random.Generator
) -> SiteOccupancy:
    """Advance the occupancy from site x-1 to x.

    Y_x is negative binomial over the k = prev.up - 1 parent loops, drawn as a
    Poisson with gamma(k) intensity; zeta_x is a single geometric.  Draw order
    (gamma, Poisson, geometric) is fixed by the reproducibility contract.
    """
    if prev.x != x - 1:
        raise ValueError(f"occupancy at {prev.x} cannot step to {x}")
    b = geom_param(kernel, x).loop_prob
    k = prev.up - 1
    if k > 0:
        inherited = int(rng.poisson(rng.gamma(k, b / (1.0 - b))))
    else:
        inherited = 0
    fresh = int(rng.geometric(1.0 - b)) - 1
    return SiteOccupancy(
        x=x, up=inherited + fresh + 1, loops_from_loops=inherited, loops_from_escape=fresh
    )


@dataclass(frozen=True)
class CountSummary:
    """Counts |C intersect [1, n]| for one replica, with their scaled values."""

    n: int
    counts: dict
    scaled: dict  # count / (lambda_C log n)


def _memberships(kind: SetKind, prev_up: int, occ: SiteOccupancy) -> bool:
    if kind.code == "cw":
        return occ.loops_from_loops == 0
    if kind.code == "cstar":
        return occ.up == kind.up[0]
    return any(prev_up == v - w + 1 and occ.up == w for v, w in kind.components())


def run_replica(
    kernel: PotentialKernel, n: int, kinds: Sequence[SetKind], seed
) -> CountSummary:
    """One replica through the reference (numpy Generator) path.

    The production path is :func:`run_ensemble`; this scalar version exists
    for unit-level checks and for set-valued kinds.  ``seed`` may be anything
    accepted by np.random.default_rng, or a Generator.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if n > kernel.n_max:
        raise ValueError(f"n={n} exceeds the kernel table ({kernel.n_max})")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    occ = initial_occupancy(kernel, rng)
    counts = {kind: 0 for kind in kinds}
    for x in range(1, n + 1):
        prev_up = occ.up
        occ = step(kernel, occ, x, rng)
        for kind in kinds:
            if _memberships(kind, prev_up, occ):
                counts[kind] += 1
    log_n = math.log(n)
    scaled = {kind: counts[kind] / (lambda_const(kind) * log_n) for kind in kinds}
    return CountSummary(n=n, counts=counts, scaled=scaled)


@dataclass(frozen=True)
class EnsembleCounts:
    """Per-replica counts at each checkpoint for each requested kind."""

    checkpoints: tuple[int, ...]
    kinds: tuple[SetKind, ...]
    counts: np.ndarray  # int64 [n_checkpoints, n_kinds, replicas]
    seed: int
    rng_contract: str = RNG_CONTRACT

    @property
    def replicas(self) -> int:
        return self.counts.shape[2]

    def counts_for(self, n: int, kind: SetKind) -> np.ndarray:
        ci = self.checkpoints.index(n)
        kj = self.kinds.index(kind)
        return self.counts[ci, kj]

    def scaled_for(self, n: int, kind: SetKind) -> np.ndarray:
        return self.counts_for(n, kind) / (lambda_const(kind) * math.log(n))


def _primitive_rows(kinds: Sequence[SetKind]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Flatten kinds into (code, t1, t2, owner) membership tests for the kernel."""
    rows = []
    for j, kind in enumerate(kinds):
        if kind.code == "cw":
            rows.append((_kernels.PRIM_WEAK, 0, 0, j))
        elif kind.code == "cstar":
            rows.append((_kernels.PRIM_UPCROSS, kind.up[0], 0, j))
        else:
            for v, w in kind.components():
                rows.append((_kernels.PRIM_PAIR, v - w + 1, w, j))
    cols = tuple(np.asarray(col, dtype=np.int64) for col in zip(*rows))
    return cols


def replica_seeds(master_seed: int, replicas: int) -> np.ndarray:
    """uint32 per-replica MT seeds: base + r with base drawn from the master sequence."""
    base = np.random.SeedSequence(master_seed).generate_state(1, dtype=np.uint32)[0]
    return ((np.uint64(base) + np.arange(replicas, dtype=np.uint64)) & np.uint64(0xFFFFFFFF)).astype(
        np.uint32
    )


def run_ensemble(
    kernel: PotentialKernel,
    kinds: Sequence[SetKind],
    replicas: int,
    seed: int,
    checkpoints: Sequence[int] | None = None,
    n: int | None = None,
    workers: int = 1,
) -> EnsembleCounts:
    """Simulate ``replicas`` independent chains up to max(checkpoints).

    Counts at every checkpoint come from the same replica (prefix counts of
    one chain), so each checkpoint's marginal law is exact and comparisons
    across checkpoints enjoy common-random-number coupling.  Identical
    (seed, checkpoints, kinds, replicas) give identical results for any
    worker count.
    """
    if checkpoints is None:
        if n is None:
            raise ValueError("pass checkpoints or n")
        checkpoints = [n]
    cps = sorted(set(int(c) for c in checkpoints))
    if cps[0] < 1:
        raise ValueError(f"checkpoints must be >= 1, got {cps}")
    top = cps[-1]
    if top > kernel.n_max:
        raise ValueError(f"checkpoint {top} exceeds the kernel table ({kernel.n_max})")
    if replicas < 1:
        raise ValueError(f"need replicas >= 1, got {replicas}")
    kinds = tuple(kinds)
    if not kinds:
        raise ValueError("at least one site-set kind is required")
    d = kernel.d_array[: top + 1]
    loop_prob = kernel.env.p_slice(0, top + 1) * (1.0 - 1.0 / d)
    prim = _primitive_rows(kinds)
    seeds = replica_seeds(seed, replicas)
    from numba import get_num_threads, set_num_threads

    old = get_num_threads()
    set_num_threads(max(1, int(workers)))
    try:
        raw = _kernels.branch_counts(
            seeds,
            top,
            1.0 / kernel.d_of(0),
            loop_prob,
            np.asarray(cps, dtype=np.int64),
            *prim,
            len(kinds),
        )
    finally:
        set_num_threads(old)
    return EnsembleCounts(
        checkpoints=tuple(cps),
        kinds=kinds,
        counts=np.ascontiguousarray(raw.transpose(1, 2, 0)),
        seed=int(seed),
    )


# ---------------------------------------------------------------------------
# generating functions


def offspring_pgf(kernel: PotentialKernel, x: int, s: float) -> float:
    """pgf of the number of forward loops at x inside one forward loop at x-1."""
    if x < 1:
        raise ValueError("offspring pgf needs x >= 1 (site 0 has no loops below it)")
    env = kernel.env
    b = geom_param(kernel, x).loop_prob
    return env.q_at(x) / (1.0 - 1.0 / kernel.d_of(x - 1)) / (1.0 - s * b)


def immigration_pgf(kernel: PotentialKernel, x: int, s: float) -> float:
    """pgf of the number of forward loops at x inside the escape from x-1."""
    env = kernel.env
    b = geom_param(kernel, x).loop_prob
    escape_up = env.p_at(x) / kernel.d_of(x)
    through = 1.0 if x == 0 else 1.0 / kernel.d_of(x - 1)
    return escape_up / through / (1.0 - s * b)


def upcross_pgf_closed(kernel: PotentialKernel, x: int, s: float) -> float:
    """Closed geometric form of E s^xi(x,up): (s/D(x)) / (1 - s(1 - 1/D(x)))."""
    d = kernel.d_of(x)
    return (s / d) / (1.0 - s * (1.0 - 1.0 / d))


def upcross_pgf_iterated(kernel: PotentialKernel, x: int, s: float) -> float:
    """E s^xi(x,up) by iterating G_t(s) = s g_t(s) G_{t-1}(f_t(s)) / f_t(s).

    The argument is composed backward through the offspring pgfs down to site
    0, where the closed form anchors the recursion; the forward pass then
    never needs a parametric representation of any G_t.
    """
    args = [float(s)]
    for t in range(x, 0, -1):
        args.append(offspring_pgf(kernel, t, args[-1]))
    args.reverse()  # args[t] is the point where G_t is evaluated
    g = upcross_pgf_closed(kernel, 0, args[0])
    for t in range(1, x + 1):
        st = args[t]
        g = st * immigration_pgf(kernel, t, st) * g / args[t - 1]
    return g


def prob_no_inherited_loops(kernel: PotentialKernel, x: int) -> float:
    """P(Y_x = 0) = G_{x-1}(1 - B_x)/(1 - B_x); equals the weak-cutpoint law."""
    if x < 1:
        raise ValueError(f"need x >= 1, got {x}")
    b = geom_param(kernel, x).loop_prob
    return upcross_pgf_iterated(kernel, x - 1, 1.0 - b) / (1.0 - b)


@dataclass(frozen=True)
class PgfReport:
    rows: list
    max_marginal_dev: float
    max_weak_dev: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.max_marginal_dev <= self.tolerance and self.max_weak_dev <= self.tolerance


def pgf_iterate(
    kernel: PotentialKernel,
    x_max: int,
    s_grid: Sequence[float] = (0.0, 0.3, 0.7, 0.99),
    tolerance: float = 1e-10,
) -> PgfReport:
    """Deterministic sweep: iterated pgfs vs closed marginals and weak-cut law."""
    for s in s_grid:
        if not 0.0 <= s < 1.0:
            raise ValueError(f"s values must lie in [0, 1), got {s}")
    rows = []
    max_marginal = 0.0
    max_weak = 0.0
    for x in range(0, x_max + 1):
        for s in s_grid:
            got = upcross_pgf_iterated(kernel, x, s)
            want = upcross_pgf_closed(kernel, x, s)
            dev = abs(got - want)
            max_marginal = max(max_marginal, dev)
            rows.append({"x": x, "s": s, "iterated": got, "closed": want, "dev": dev})
        if x >= 1:
            got = prob_no_inherited_loops(kernel, x)
            want = weak_prob(kernel, x)
            dev = abs(got - want)
            max_weak = max(max_weak, dev)
            rows.append({"x": x, "s": None, "iterated": got, "closed": want, "dev": dev})
    return PgfReport(
        rows=rows, max_marginal_dev=max_marginal, max_weak_dev=max_weak, tolerance=tolerance
    )
