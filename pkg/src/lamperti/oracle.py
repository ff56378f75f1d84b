"""Independent verification machinery binding formulas, samplers and enumerations.

Nothing here shares a code path with the closed-form kernel beyond the raw
transition probabilities: exit probabilities are re-derived from the harmonic
three-term recurrence by a banded linear solve, short-horizon events are
summed exactly over the state distribution (in rational arithmetic when the
family is rational), and composition counts are recomputed by exhaustive
enumeration.  ``cross_check_suite`` wires these oracles, the exact laws and
both samplers into one pass/fail report.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy.linalg import solve_banded
from scipy.stats import chi2

from . import analytics, branching, combinatorics, walker
from .analytics import SetKind
from .environment import Environment, PotentialKernel

__all__ = [
    "tridiag_exit",
    "HitBefore",
    "FIRST_STEP_UP",
    "EnumerationResult",
    "enumerate_paths",
    "compositions",
    "padded_compositions",
    "Check",
    "VerificationReport",
    "CrossCheckConfig",
    "cross_check_suite",
    "two_sample_chisquare",
]


# ---------------------------------------------------------------------------
# tridiagonal exit probabilities


def tridiag_exit(env: Environment, m: int, n: int) -> np.ndarray:
    """P(hit n before m | start at k) for k = m..n via a banded linear solve.

    Solves h(m) = 0, h(n) = 1, h(k) = p_k h(k+1) + q_k h(k-1) directly; the
    system is irreducibly tridiagonal, hence nonsingular for valid
    probabilities.
    """
    if not 0 <= m < n:
        raise ValueError(f"need 0 <= m < n, got m={m}, n={n}")
    if n - m > 10**6:
        raise ValueError(f"interval length {n - m} exceeds the solver guard")
    size = n - m - 1
    if size == 0:
        return np.array([0.0, 1.0])
    p = env.p_slice(m + 1, n)
    q = 1.0 - p
    ab = np.zeros((3, size))
    ab[0, 1:] = -p[:-1]  # superdiagonal: -p_k h(k+1)
    ab[1, :] = 1.0
    ab[2, :-1] = -q[1:]  # subdiagonal: -q_k h(k-1)
    rhs = np.zeros(size)
    rhs[-1] = p[-1]
    interior = solve_banded((1, 1), ab, rhs)
    if not np.all(np.isfinite(interior)):
        raise AssertionError("singular tridiagonal system for valid probabilities")
    return np.concatenate(([0.0], interior, [1.0]))


# ---------------------------------------------------------------------------
# exact short-horizon path enumeration


@dataclass(frozen=True)
class HitBefore:
    """Event: started at ``start``, the walk hits ``upper`` before ``lower``."""

    start: int
    lower: int
    upper: int

    def __post_init__(self):
        if not self.lower <= self.start <= self.upper:
            raise ValueError(f"need lower <= start <= upper, got {self}")


FIRST_STEP_UP = "first-step-up"


@dataclass(frozen=True)
class EnumerationResult:
    value: float  # mass of paths realizing the event within the horizon
    complement: float  # mass of paths refuting it
    remaining: float  # undecided mass: |true probability - value| <= remaining
    exact_arithmetic: bool


def enumerate_paths(env: Environment, max_len: int, event) -> EnumerationResult:
    """Sum exact path probabilities deciding ``event`` within ``max_len`` steps.

    Paths are aggregated by their current state, which is an exact regrouping
    of the path sum.  The harmonic family is evaluated in rational arithmetic
    (zero-tolerance); other families in floats.  Raises if no path of length
    max_len can decide the event.
    """
    if max_len < 1 or max_len > 30:
        raise ValueError(f"max_len must lie in [1, 30], got {max_len}")
    if event == FIRST_STEP_UP:
        return EnumerationResult(1.0, 0.0, 0.0, exact_arithmetic=True)
    if not isinstance(event, HitBefore):
        raise ValueError(f"unsupported event {event!r}")
    if min(event.upper - event.start, event.start - event.lower) > max_len:
        raise ValueError(f"{event} is not decidable within {max_len} steps")
    rational = env.spec.family == "harmonic"

    def prob_up(site: int):
        return env.p_fraction(site) if rational else env.p_at(site)

    zero = Fraction(0) if rational else 0.0
    one = Fraction(1) if rational else 1.0
    mass = {event.start: one}
    hit_upper = zero
    hit_lower = zero
    for _ in range(max_len):
        nxt: dict[int, object] = {}
        for site, m in mass.items():
            p = prob_up(site)
            for target, part in ((site + 1, m * p), (site - 1, m * (one - p))):
                if target == event.upper:
                    hit_upper += part
                elif target == event.lower:
                    hit_lower += part
                else:
                    nxt[target] = nxt.get(target, zero) + part
        mass = nxt
        if not mass:
            break
    remaining = sum(mass.values(), zero)
    return EnumerationResult(
        value=float(hit_upper),
        complement=float(hit_lower),
        remaining=float(remaining),
        exact_arithmetic=rational,
    )


# ---------------------------------------------------------------------------
# exhaustive composition enumeration


def compositions(a: int, j: int) -> Iterator[tuple[int, ...]]:
    """All j-tuples of positive integers summing to a, by explicit recursion."""
    if j == 1:
        if a >= 1:
            yield (a,)
        return
    for first in range(1, a - j + 2):
        for rest in compositions(a - first, j - 1):
            yield (first,) + rest


def padded_compositions(a: int, j: int) -> Iterator[tuple[int, ...]]:
    """All nonnegative j-tuples summing to a with last coordinate >= 1."""
    if j == 1:
        if a >= 1:
            yield (a,)
        return
    for first in range(0, a + 1):
        for rest in padded_compositions(a - first, j - 1):
            yield (first,) + rest


# ---------------------------------------------------------------------------
# cross-check harness


@dataclass(frozen=True)
class Check:
    name: str
    lhs: float
    rhs: float
    tolerance: float
    passed: bool
    provenance: str
    sigma: float | None = None


@dataclass
class VerificationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def overall(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, lhs, rhs, tolerance, provenance, sigma=None):
        lhs, rhs = float(lhs), float(rhs)
        self.checks.append(
            Check(
                name=name,
                lhs=lhs,
                rhs=rhs,
                tolerance=float(tolerance),
                passed=bool(abs(lhs - rhs) <= tolerance),
                provenance=provenance,
                sigma=None if sigma is None else float(sigma),
            )
        )

    def failed(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def to_json(self) -> str:
        return json.dumps(
            {"overall": self.overall, "checks": [asdict(c) for c in self.checks]}, indent=2
        )

    @classmethod
    def from_json(cls, text: str) -> "VerificationReport":
        data = json.loads(text)
        return cls(checks=[Check(**c) for c in data["checks"]])


@dataclass(frozen=True)
class CrossCheckConfig:
    """Sizes, seed and optional formula perturbations for the cross-check suite.

    ``perturb`` maps a law name ("site-law", "upcross-law", "weak-prob",
    "exit-formula") to a relative offset applied to that law inside the suite;
    the harness self-test injects a fault and asserts that exactly the
    dependent exact checks flip.
    """

    family: str = "harmonic"
    seed: int = 20260809
    kernel_size: int = 6000
    walker_n: int = 10
    walker_eps: float = 0.02
    walker_replicas: int = 3000
    branching_replicas: int = 100_000
    kernel_tolerance: float = 1e-10
    perturb: Mapping[str, float] = field(default_factory=dict)


class _Laws:
    """Analytic laws with optional fault injection, shared by every check."""

    def __init__(self, kernel: PotentialKernel, perturb: Mapping[str, float]):
        self.kernel = kernel
        self._perturb = dict(perturb)
        unknown = set(self._perturb) - {"site-law", "upcross-law", "weak-prob", "exit-formula"}
        if unknown:
            raise ValueError(f"unknown perturbation keys {sorted(unknown)}")

    def _f(self, key: str) -> float:
        return 1.0 + self._perturb.get(key, 0.0)

    def site_law(self, x, a, b):
        return analytics.site_law(self.kernel, x, a, b) * self._f("site-law")

    def upcross_law(self, x, b):
        return analytics.upcross_law(self.kernel, x, b) * self._f("upcross-law")

    def weak_prob(self, x):
        return analytics.weak_prob(self.kernel, x) * self._f("weak-prob")

    def exit_up(self, k, m, n):
        return analytics.exit_up(self.kernel, k, m, n) * self._f("exit-formula")


def two_sample_chisquare(
    a: Sequence[tuple], b: Sequence[tuple], min_expected: float = 5.0
) -> tuple[float, int, float]:
    """Two-sample chi-square on histograms of hashable observations.

    Cells are pooled (rarest first) until every pooled expected count reaches
    ``min_expected``.  Returns (statistic, dof, p_value).
    """
    keys: dict = {}
    for obs in a:
        keys.setdefault(obs, [0, 0])[0] += 1
    for obs in b:
        keys.setdefault(obs, [0, 0])[1] += 1
    cells = sorted(keys.values(), key=lambda c: c[0] + c[1])
    pooled: list[list[int]] = []
    bucket = [0, 0]
    na = sum(c[0] for c in cells)
    nb = sum(c[1] for c in cells)
    scale_a = na / (na + nb)
    for c in cells:
        bucket[0] += c[0]
        bucket[1] += c[1]
        if (bucket[0] + bucket[1]) * min(scale_a, 1 - scale_a) >= min_expected:
            pooled.append(bucket)
            bucket = [0, 0]
    if bucket != [0, 0]:
        if pooled:
            pooled[-1][0] += bucket[0]
            pooled[-1][1] += bucket[1]
        else:
            pooled.append(bucket)
    stat = 0.0
    for ca, cb in pooled:
        tot = ca + cb
        ea = tot * scale_a
        eb = tot - ea
        stat += (ca - ea) ** 2 / ea + (cb - eb) ** 2 / eb
    dof = max(len(pooled) - 1, 1)
    return stat, dof, float(chi2.sf(stat, dof))


def _mc_rate_check(report, name, hits, replicas, target, extra_bias=0.0, provenance=""):
    rate = hits / replicas
    sigma = math.sqrt(max(rate * (1.0 - rate), 1e-12) / replicas)
    report.add(name, rate, target, 4.0 * sigma + extra_bias, provenance, sigma=sigma)


def _check_exits(report: VerificationReport, laws: _Laws, env: Environment):
    for m, n in ((0, 50), (5, 10), (100, 5000)):
        h = tridiag_exit(env, m, n)
        formula = np.array([laws.exit_up(k, m, n) for k in range(m, n + 1)])
        dev = float(np.max(np.abs(h - formula)))
        report.add(f"exit/tridiag-vs-formula[{m},{n}]", dev, 0.0, 1e-10, "analytic")
        report.add(f"exit/boundaries[{m},{n}]", abs(h[0]) + abs(h[-1] - 1.0), 0.0, 0.0, "analytic")


def _check_pgf(report: VerificationReport, laws: _Laws, kernel: PotentialKernel, tol: float):
    pgf = branching.pgf_iterate(kernel, x_max=200, tolerance=tol)
    report.add("pgf/iterated-vs-closed-marginal", pgf.max_marginal_dev, 0.0, tol, "analytic")
    dev = max(
        abs(branching.prob_no_inherited_loops(kernel, x) - laws.weak_prob(x))
        for x in (1, 2, 9, 50, 200)
    )
    report.add("pgf/no-loops-vs-weak-prob", dev, 0.0, tol, "analytic")


def _check_walker(report: VerificationReport, laws: _Laws, cfg, walk_run):
    n, eps, reps = cfg.walker_n, cfg.walker_eps, cfg.walker_replicas
    prov = f"monte-carlo(R={reps}, eps={eps})"
    x = n - 1
    for b in (1, 2):
        hits = int((walk_run.xi_up[:, x] == b).sum())
        _mc_rate_check(
            report, f"walker/upcross-law[x={x},b={b}]", hits, reps, laws.upcross_law(x, b), eps, prov
        )
    for a, b in ((1, 1), (2, 1), (3, 2)):
        hits = int(((walk_run.xi[:, x] == a) & (walk_run.xi_up[:, x] == b)).sum())
        _mc_rate_check(
            report, f"walker/site-law[x={x},a={a},b={b}]", hits, reps, laws.site_law(x, a, b), eps, prov
        )
    member = walk_run.last_visit[:, x - 1] < walk_run.first_hit[:, x + 1]
    _mc_rate_check(
        report, f"walker/weak-prob[x={x}]", int(member.sum()), reps, laws.weak_prob(x), eps, prov
    )
    ident = walk_run.xi[:, 1 : n + 1] == walk_run.xi_up[:, 1 : n + 1] + walk_run.xi_up[:, 0:n] - 1
    report.add("walker/local-time-identity", float(ident.all()), 1.0, 0.0, prov)


def _check_branching(report, laws, kernel, branch_run, n):
    reps = branch_run.replicas
    prov = f"monte-carlo(R={reps})"
    x = n
    for b in (1, 2, 3):
        kind = SetKind.exact_upcross(b)
        at_x = branch_run.counts_for(n, kind) - branch_run.counts_for(n - 1, kind)
        _mc_rate_check(
            report,
            f"branching/upcross-law[x={x},b={b}]",
            int(at_x.sum()),
            reps,
            laws.upcross_law(x, b),
            provenance=prov,
        )
    cw = SetKind.weak_cutpoints()
    at_x = branch_run.counts_for(n, cw) - branch_run.counts_for(n - 1, cw)
    _mc_rate_check(
        report, f"branching/weak-prob[x={x}]", int(at_x.sum()), reps, laws.weak_prob(x), provenance=prov
    )
    pair = SetKind.pair(2, 1)
    at_x = branch_run.counts_for(n, pair) - branch_run.counts_for(n - 1, pair)
    _mc_rate_check(
        report, f"branching/site-law[x={x},a=2,b=1]", int(at_x.sum()), reps, laws.site_law(x, 2, 1), provenance=prov
    )
    counts = branch_run.counts_for(n, cw)
    mean = float(counts.mean())
    sigma = float(counts.std(ddof=1)) / math.sqrt(reps)
    expected = analytics.expected_count(kernel, n, cw)
    report.add(
        "branching/mean-count-vs-expected[cw]", mean, expected, 4.0 * sigma, prov, sigma=sigma
    )


def _check_samplers(report, cfg, kernel, walk_run, seed):
    n, eps = cfg.walker_n, cfg.walker_eps
    reps = walk_run.replicas
    kinds = (SetKind.weak_cutpoints(), SetKind.pair(2, 1))
    branch_run = branching.run_ensemble(kernel, kinds, reps, seed + 1, checkpoints=[n])
    prov = f"monte-carlo(R={reps}, eps={eps})"
    for kind in kinds:
        wc = walker.counts_from_tallies(kind, walk_run.xi_up, walk_run.first_hit, walk_run.last_visit, n)
        bc = branch_run.counts_for(n, kind)
        sigma = math.sqrt(wc.var(ddof=1) / reps + bc.var(ddof=1) / reps)
        report.add(
            f"samplers/mean-count[{kind.label}]",
            float(wc.mean()),
            float(bc.mean()),
            4.0 * sigma + eps * n,
            prov,
            sigma=sigma,
        )
    wj = list(
        zip(
            walker.counts_from_tallies(kinds[0], walk_run.xi_up, walk_run.first_hit, walk_run.last_visit, n).tolist(),
            walker.counts_from_tallies(kinds[1], walk_run.xi_up, walk_run.first_hit, walk_run.last_visit, n).tolist(),
        )
    )
    bj = list(
        zip(branch_run.counts_for(n, kinds[0]).tolist(), branch_run.counts_for(n, kinds[1]).tolist())
    )
    _, dof, pval = two_sample_chisquare(wj, bj)
    report.add(
        f"samplers/joint-histogram-chisq(p={pval:.5f},dof={dof})",
        float(pval > 0.001),
        1.0,
        0.0,
        prov,
    )


def _check_combinatorics(report: VerificationReport):
    for a in range(1, 11):
        for j in range(1, a + 1):
            got = sum(1 for _ in compositions(a, j))
            report.add(
                f"combinatorics/strict[{a},{j}]", got, combinatorics.count_strict(a, j), 0.0, "enumerated"
            )
    for a in range(1, 8):
        for j in range(1, 7):
            tuples = list(padded_compositions(a, j))
            for i in range(1, min(a, j) + 1):
                got = sum(1 for v in tuples if sum(1 for c in v if c) == i)
                report.add(
                    f"combinatorics/padded[{a},{j},{i}]",
                    got,
                    combinatorics.count_padded(a, j, i),
                    0.0,
                    "enumerated",
                )
    for k in (1, 2, 3):
        for n in (50, 200):
            val = combinatorics.logsum_kfold(n, k)
            lo = combinatorics.logsum_lower_bound(n, k)
            hi = combinatorics.logsum_upper_bound(n, k)
            report.add(
                f"combinatorics/sandwich[k={k},n={n}]",
                float(lo <= val <= hi),
                1.0,
                0.0,
                "analytic",
            )


def _check_identities(report: VerificationReport, laws: _Laws, kernel: PotentialKernel, tol: float):
    for x, b in ((5, 1), (9, 2), (20, 3)):
        total, bound = analytics.sum_site_law_over_local_time(kernel, x, b)
        total *= laws._f("site-law")
        report.add(
            f"identities/site-sum-vs-upcross[x={x},b={b}]",
            total,
            laws.upcross_law(x, b),
            tol + bound,
            "analytic",
        )
    for x, b in ((5, 1), (10, 2), (20, 3)):
        y = x + 15
        total, bound = analytics.sum_joint_upcross_over_m(kernel, x, y, b)
        report.add(
            f"identities/joint-upcross-marginal[x={x},y={y},b={b}]",
            total,
            laws.upcross_law(x, b),
            tol + bound,
            "analytic",
        )
    dev = max(
        abs(analytics.site_law_via_pair(kernel, x, a, b) - laws.site_law(x, a, b))
        for x in (1, 5, 9, 40)
        for a, b in ((1, 1), (2, 1), (3, 2), (5, 3))
    )
    report.add("identities/pair-vs-single-site-law", dev, 0.0, tol, "analytic")
    whole = analytics.expected_count(kernel, 200, SetKind.upcross_in(3, (1, 2, 3)))
    parts = sum(
        analytics.expected_count(kernel, 200, SetKind.pair(3, b)) for b in (1, 2, 3)
    )
    report.add("identities/expected-count-additivity", whole, parts, 1e-12, "analytic")
    strong = analytics.site_law(kernel, 9, 1, 1)
    escape = analytics.event_probabilities(kernel, 9, 10).escape
    report.add("identities/strong-cutpoint-is-escape", strong, escape, 1e-15, "analytic")


def cross_check_suite(
    config: CrossCheckConfig = CrossCheckConfig(), parts: Sequence[str] = ("all",)
) -> VerificationReport:
    """Run the cross-validation suite and return its report.

    Parts: exit, pgf, walker, branching, samplers, combinatorics, identities,
    or "all".  Statistical checks use 4 sigma from the observed sample
    variance, plus the walker's eps bias budget where the walker is involved.
    """
    from .environment import DriftSpec

    want = set(parts)
    if "all" in want:
        want = {"exit", "pgf", "walker", "branching", "samplers", "combinatorics", "identities"}
    spec = DriftSpec.parse(config.family)
    env = Environment(spec)
    kernel = PotentialKernel.build(env, config.kernel_size)
    laws = _Laws(kernel, config.perturb)
    report = VerificationReport()
    tol = config.kernel_tolerance
    if "exit" in want:
        _check_exits(report, laws, env)
    if "pgf" in want:
        _check_pgf(report, laws, kernel, tol)
    walk_run = None
    if want & {"walker", "samplers"}:
        walk_run = walker.walk_ensemble(
            env,
            config.walker_n,
            config.walker_eps,
            config.walker_replicas,
            config.seed,
            kinds=(),
            kernel=kernel,
        )
    if "walker" in want:
        _check_walker(report, laws, config, walk_run)
    if "branching" in want:
        n = config.walker_n - 1
        kinds = (
            SetKind.weak_cutpoints(),
            SetKind.pair(2, 1),
            SetKind.exact_upcross(1),
            SetKind.exact_upcross(2),
            SetKind.exact_upcross(3),
        )
        branch_run = branching.run_ensemble(
            kernel, kinds, config.branching_replicas, config.seed, checkpoints=[n - 1, n]
        )
        _check_branching(report, laws, kernel, branch_run, n)
    if "samplers" in want:
        _check_samplers(report, config, kernel, walk_run, config.seed)
    if "combinatorics" in want:
        _check_combinatorics(report)
    if "identities" in want:
        _check_identities(report, laws, kernel, tol)
    return report
