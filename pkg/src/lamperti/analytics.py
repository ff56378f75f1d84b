"""Closed-form laws for local times, upcrossings and weak cutpoints.

All formulas are written in terms of the potential kernel D(m, n), D(m) and
the one-step probabilities; every function takes the prebuilt kernel and is a
pure read.  The central objects:

* single-site law      P(xi(x) = a, xi(x,up) = b)
* upcrossing law       P(xi(x,up) = b)              (geometric, mean D(x))
* weak-cutpoint law    P(x is a weak cutpoint) = 1 / (p_x D(x-1))
* two-site joint laws for each of those events, as finite i-sums over the
  number of forward moves from x that reach y
* the limit constants  lambda_C = lim D(x) P(x in C).

Site sets are described by :class:`SetKind`: the weak cutpoints ``cw``, pairs
``cab:a:b`` = {x : xi(x) = a, xi(x,up) = b} (either slot may be a '+'-joined
set, e.g. ``cab:3:1+2``), and ``cstar:a`` = {x : xi(x,up) = a}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .environment import PotentialKernel

__all__ = [
    "SetKind",
    "parse_kind",
    "EventProbabilities",
    "exit_down",
    "exit_up",
    "event_probabilities",
    "site_law",
    "site_law_via_pair",
    "upcross_law",
    "weak_prob",
    "weak_joint",
    "joint_site_law",
    "joint_upcross_law",
    "sum_joint_upcross_over_m",
    "sum_site_law_over_local_time",
    "lambda_const",
    "membership_prob",
    "membership_prob_vector",
    "expected_count",
    "pair_ratio",
    "limit_ratio_report",
]


@dataclass(frozen=True)
class SetKind:
    """A family of sites selected by local time and/or upcrossing count."""

    code: str  # "cw" | "cab" | "cstar"
    local: tuple[int, ...] = ()  # admissible local-time values (cab only)
    up: tuple[int, ...] = ()  # admissible upcrossing values

    def __post_init__(self):
        if self.code == "cw":
            if self.local or self.up:
                raise ValueError("cw takes no parameters")
        elif self.code == "cstar":
            if len(self.up) != 1 or self.up[0] < 1 or self.local:
                raise ValueError("cstar needs a single upcrossing count >= 1")
        elif self.code == "cab":
            if not self.local or not self.up:
                raise ValueError("cab needs local-time and upcrossing values")
            if len(self.local) > 1 and len(self.up) > 1:
                raise ValueError("at most one slot of cab may be a set")
            if min(self.up) < 1:
                raise ValueError("upcrossing counts must be >= 1")
            if min(self.local) < max(self.up):
                raise ValueError(
                    f"local time must dominate upcrossings: got {self.local} vs {self.up}"
                )
        else:
            raise ValueError(f"unknown kind code {self.code!r}")

    @classmethod
    def weak_cutpoints(cls) -> "SetKind":
        return cls("cw")

    @classmethod
    def pair(cls, a: int, b: int) -> "SetKind":
        return cls("cab", local=(a,), up=(b,))

    @classmethod
    def exact_upcross(cls, a: int) -> "SetKind":
        return cls("cstar", up=(a,))

    @classmethod
    def local_time_in(cls, values: Iterable[int], a: int) -> "SetKind":
        return cls("cab", local=tuple(sorted(set(values))), up=(a,))

    @classmethod
    def upcross_in(cls, a: int, values: Iterable[int]) -> "SetKind":
        return cls("cab", local=(a,), up=tuple(sorted(set(values))))

    @property
    def label(self) -> str:
        if self.code == "cw":
            return "cw"
        if self.code == "cstar":
            return f"cstar:{self.up[0]}"
        return f"cab:{'+'.join(map(str, self.local))}:{'+'.join(map(str, self.up))}"

    def components(self) -> list[tuple[int, int]]:
        """Disjoint (local-time, upcrossing) pairs whose counts add up to this kind."""
        if self.code != "cab":
            raise ValueError(f"{self.label} does not decompose into (a, b) pairs")
        return [(v, w) for v in self.local for w in self.up]


def parse_kind(label: str) -> SetKind:
    """Inverse of SetKind.label: cw | cab:A:B | cstar:A with '+'-joined sets."""
    parts = label.strip().split(":")
    if parts[0] == "cw" and len(parts) == 1:
        return SetKind.weak_cutpoints()
    if parts[0] == "cstar" and len(parts) == 2:
        return SetKind.exact_upcross(int(parts[1]))
    if parts[0] == "cab" and len(parts) == 3:
        local = tuple(int(s) for s in parts[1].split("+"))
        up = tuple(int(s) for s in parts[2].split("+"))
        return SetKind("cab", local=local, up=up)
    raise ValueError(f"cannot parse set kind {label!r}")


# ---------------------------------------------------------------------------
# exit probabilities and path-fragment probabilities


def exit_down(kernel: PotentialKernel, k: int, m: int, n: int) -> float:
    """P(the walk started at k hits m before n) = 1 - D(m, k)/D(m, n)."""
    if not m <= k <= n:
        raise ValueError(f"need m <= k <= n, got k={k}, m={m}, n={n}")
    return 1.0 - kernel.d_between(m, k) / kernel.d_between(m, n)


def exit_up(kernel: PotentialKernel, k: int, m: int, n: int) -> float:
    """P(the walk started at k hits n before m) = D(m, k)/D(m, n)."""
    if not m <= k <= n:
        raise ValueError(f"need m <= k <= n, got k={k}, m={m}, n={n}")
    return kernel.d_between(m, k) / kernel.d_between(m, n)


@dataclass(frozen=True)
class EventProbabilities:
    """The seven loop/move/escape probabilities between sites x < y."""

    forward_loop: float  # up from x, back to x before escaping to infinity
    forward_loop_avoiding: float  # up from x, back to x before reaching y
    forward_move: float  # up from x, reaches y before returning to x
    escape: float  # up from x, never returns to x
    backward_loop: float  # down from x, eventually back to x
    backward_loop_avoiding: float  # down from y, back to y before reaching x
    backward_move: float  # down from y, reaches x before returning to y


def event_probabilities(kernel: PotentialKernel, x: int, y: int) -> EventProbabilities:
    if not 0 <= x < y:
        raise ValueError(f"need 0 <= x < y, got x={x}, y={y}")
    env = kernel.env
    px, qy = env.p_at(x), env.q_at(y)
    dx = kernel.d_of(x)
    dxy = kernel.d_between(x, y)
    dxy1 = kernel.d_between(x, y - 1)
    return EventProbabilities(
        forward_loop=px * (1.0 - 1.0 / dx),
        forward_loop_avoiding=px * (1.0 - 1.0 / dxy),
        forward_move=px / dxy,
        escape=px / dx,
        backward_loop=env.q_at(x),
        backward_loop_avoiding=qy * dxy1 / dxy,
        backward_move=qy * (1.0 - dxy1 / dxy),
    )


# ---------------------------------------------------------------------------
# single-site laws


def site_law(kernel: PotentialKernel, x: int, a: int, b: int) -> float:
    """P(xi(x) = a, xi(x,up) = b) for x >= 1, a >= b >= 1."""
    if x < 1:
        raise ValueError(f"site must be >= 1, got {x}")
    if not a >= b >= 1:
        raise ValueError(f"need a >= b >= 1, got a={a}, b={b}")
    env = kernel.env
    p, q = env.p_at(x), env.q_at(x)
    d = kernel.d_of(x)
    return math.comb(a - 1, b - 1) * p**b * q ** (a - b) * (1.0 - 1.0 / d) ** (b - 1) / d


def site_law_via_pair(kernel: PotentialKernel, x: int, a: int, b: int) -> float:
    """Same probability assembled from the branching transition.

    {xi(x) = a, xi(x,up) = b} = {xi(x-1,up) = a-b+1, xi(x,up) = b}, and given
    k = a - b extra upcrossings at x-1 the count at x is 1 plus a negative
    binomial with k+1 geometric components of parameter B = p_x (1 - 1/D(x)).
    Must agree with site_law to rounding; kept as a structural cross-check.
    """
    if x < 1:
        raise ValueError(f"site must be >= 1, got {x}")
    if not a >= b >= 1:
        raise ValueError(f"need a >= b >= 1, got a={a}, b={b}")
    k = a - b
    d_prev = kernel.d_of(x - 1)
    prev_marginal = (1.0 - 1.0 / d_prev) ** k / d_prev
    big_b = kernel.env.p_at(x) * (1.0 - 1.0 / kernel.d_of(x))
    conditional = math.comb(k + b - 1, b - 1) * big_b ** (b - 1) * (1.0 - big_b) ** (k + 1)
    return prev_marginal * conditional


def upcross_law(kernel: PotentialKernel, x: int, b: int) -> float:
    """P(xi(x,up) = b) = (1 - 1/D(x))^(b-1) / D(x); geometric with mean D(x)."""
    if x < 0 or b < 1:
        raise ValueError(f"need x >= 0 and b >= 1, got x={x}, b={b}")
    d = kernel.d_of(x)
    return (1.0 - 1.0 / d) ** (b - 1) / d


def weak_prob(kernel: PotentialKernel, x: int) -> float:
    """P(x is a weak cutpoint) = 1 / (p_x D(x-1))."""
    if x < 1:
        raise ValueError(f"site must be >= 1, got {x}")
    return 1.0 / (kernel.env.p_at(x) * kernel.d_of(x - 1))


# ---------------------------------------------------------------------------
# two-site joint laws


def weak_joint(kernel: PotentialKernel, x: int, y: int) -> float:
    """P(x and y are both weak cutpoints), 1 <= x < y."""
    if not 1 <= x < y:
        raise ValueError(f"need 1 <= x < y, got x={x}, y={y}")
    env = kernel.env
    dxy = kernel.d_between(x - 1, y)
    dxy1 = kernel.d_between(x - 1, y - 1)
    denom = 1.0 - env.q_at(y) * dxy1 / dxy
    return 1.0 / (env.p_at(x) * dxy) / denom / kernel.d_of(y - 1)


def joint_site_law(
    kernel: PotentialKernel, x: int, y: int, a: int, b: int, n: int, m: int
) -> float:
    """P(xi(x) = a, xi(x,up) = b, xi(y) = n, xi(y,up) = m), 1 <= x < y.

    The i-sum runs over the number of forward moves from x that reach y
    (equivalently backward moves from y that reach x, plus the escape).
    """
    if not 1 <= x < y:
        raise ValueError(f"need 1 <= x < y, got x={x}, y={y}")
    if not (a >= b >= 1 and n >= m >= 1):
        raise ValueError(f"need a >= b >= 1 and n >= m >= 1, got {(a, b, n, m)}")
    env = kernel.env
    px, qx = env.p_at(x), env.q_at(x)
    py, qy = env.p_at(y), env.q_at(y)
    dy = kernel.d_of(y)
    dxy = kernel.d_between(x, y)
    dxy1 = kernel.d_between(x, y - 1)
    stay = qy * dxy1 / dxy  # backward loop at y avoiding x
    cross = qy * (1.0 - dxy1 / dxy)  # backward move from y to x
    loop_x = px * (1.0 - 1.0 / dxy)
    move_x = px / dxy
    loop_y = py * (1.0 - 1.0 / dy)
    total = 0.0
    for i in range(1, min(b, n - m + 1) + 1):
        total += (
            math.comb(b - 1, i - 1)
            * math.comb(n - i, m - 1)
            * math.comb(n - 1, i - 1)
            * loop_x ** (b - i)
            * move_x**i
            * loop_y ** (m - 1)
            * stay ** (n - m - i + 1)
            * cross ** (i - 1)
        )
    return math.comb(a - 1, b - 1) * qx ** (a - b) * (py / dy) * total


def joint_upcross_law(kernel: PotentialKernel, x: int, y: int, b: int, m: int) -> float:
    """P(xi(x,up) = b, xi(y,up) = m), 1 <= x < y."""
    if not 1 <= x < y:
        raise ValueError(f"need 1 <= x < y, got x={x}, y={y}")
    if b < 1 or m < 1:
        raise ValueError(f"need b, m >= 1, got b={b}, m={m}")
    env = kernel.env
    py, qy = env.p_at(y), env.q_at(y)
    dy = kernel.d_of(y)
    dxy = kernel.d_between(x, y)
    dxy1 = kernel.d_between(x, y - 1)
    w = 1.0 - qy * dxy1 / dxy  # normalizer: no backward loop at y avoiding x
    grow = py * (1.0 - 1.0 / dy) / w
    back = qy * (1.0 - dxy1 / dxy) / w
    total = 0.0
    for i in range(1, b + 1):
        total += (
            math.comb(b - 1, i - 1)
            * math.comb(m + i - 2, i - 1)
            * (1.0 - 1.0 / dxy) ** (b - i)
            * (1.0 / dxy) ** i
            * grow ** (m - 1)
            * back ** (i - 1)
        )
    return total * (py / dy) / w


def sum_joint_upcross_over_m(
    kernel: PotentialKernel, x: int, y: int, b: int, tol: float = 1e-14
) -> tuple[float, float]:
    """(sum_{m>=1} P(xi(x,up)=b, xi(y,up)=m) truncated, certified tail bound).

    For each i the m-series is negative binomial with ratio -> grow < 1, so
    once the term ratio (m+i-1)/m * grow drops below 1 the remaining mass is
    bounded geometrically.  Terms are added until the combined bound is below
    tol times the running total.
    """
    env = kernel.env
    py, qy = env.p_at(y), env.q_at(y)
    dy = kernel.d_of(y)
    dxy = kernel.d_between(x, y)
    dxy1 = kernel.d_between(x, y - 1)
    w = 1.0 - qy * dxy1 / dxy
    grow = py * (1.0 - 1.0 / dy) / w
    back = qy * (1.0 - dxy1 / dxy) / w
    base = [
        math.comb(b - 1, i - 1)
        * (1.0 - 1.0 / dxy) ** (b - i)
        * (1.0 / dxy) ** i
        * back ** (i - 1)
        * (py / dy)
        / w
        for i in range(1, b + 1)
    ]
    total = 0.0
    m = 0
    while True:
        m += 1
        terms = [base[i - 1] * math.comb(m + i - 2, i - 1) * grow ** (m - 1) for i in range(1, b + 1)]
        total += sum(terms)
        bound = 0.0
        usable = True
        for i in range(1, b + 1):
            ratio = (m + i) / (m + 1) * grow
            if ratio >= 1.0:
                usable = False
                break
            nxt = base[i - 1] * math.comb(m + i - 1, i - 1) * grow**m
            bound += nxt / (1.0 - ratio)
        if usable and bound <= tol * max(total, 1e-300):
            return total, bound
        if m > 100_000:
            raise RuntimeError(f"joint upcrossing sum did not certify by m={m}")


def sum_site_law_over_local_time(
    kernel: PotentialKernel, x: int, b: int, tol: float = 1e-14
) -> tuple[float, float]:
    """(sum_{a>=b} P(xi(x)=a, xi(x,up)=b) truncated, certified tail bound).

    The a-series has ratio (a/(a-b+1)) q_x, decreasing toward q_x < 1, so the
    tail past any a is geometrically bounded.  The limit is the upcrossing
    law at (x, b).
    """
    env = kernel.env
    q = env.q_at(x)
    total = 0.0
    a = b - 1
    while True:
        a += 1
        total += site_law(kernel, x, a, b)
        ratio = ((a + 1) / (a - b + 2)) * q
        if ratio < 1.0:
            nxt = site_law(kernel, x, a + 1, b)
            bound = nxt / (1.0 - ratio)
            if bound <= tol * max(total, 1e-300):
                return total, bound
        if a > 1_000_000:
            raise RuntimeError(f"site-law sum did not certify by a={a}")


# ---------------------------------------------------------------------------
# limit constants, membership probabilities, expected counts


def lambda_const(kind: SetKind) -> float:
    """lambda_C = lim_x D(x) P(x in C): 2 for cw, C(a-1,b-1)/2^a per pair, 1 for cstar."""
    if kind.code == "cw":
        return 2.0
    if kind.code == "cstar":
        return 1.0
    return sum(math.comb(v - 1, w - 1) / 2.0**v for v, w in kind.components())


def membership_prob(kernel: PotentialKernel, x: int, kind: SetKind) -> float:
    """P(x in C) for the requested site set, x >= 1."""
    if kind.code == "cw":
        return weak_prob(kernel, x)
    if kind.code == "cstar":
        return upcross_law(kernel, x, kind.up[0])
    return sum(site_law(kernel, x, v, w) for v, w in kind.components())


def membership_prob_vector(kernel: PotentialKernel, kind: SetKind, n: int) -> np.ndarray:
    """P(x in C) for x = 1..n as an array (index 0 <-> x = 1)."""
    if n > kernel.n_max:
        raise ValueError(f"n={n} exceeds the kernel table ({kernel.n_max})")
    d = kernel.d_array
    dx = d[1 : n + 1]
    if kind.code == "cw":
        p = kernel.env.p_slice(1, n + 1)
        return 1.0 / (p * d[0:n])
    if kind.code == "cstar":
        a = kind.up[0]
        return (1.0 - 1.0 / dx) ** (a - 1) / dx
    p = kernel.env.p_slice(1, n + 1)
    q = 1.0 - p
    out = np.zeros(n)
    for v, w in kind.components():
        out += math.comb(v - 1, w - 1) * p**w * q ** (v - w) * (1.0 - 1.0 / dx) ** (w - 1) / dx
    return out


def expected_count(kernel: PotentialKernel, n: int, kind: SetKind) -> float:
    """E |C intersect [1, n]| = sum_{x=1}^n P(x in C)."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    return float(membership_prob_vector(kernel, kind, n).sum())


def _joint_prob(kernel: PotentialKernel, kind: SetKind, x: int, y: int) -> float:
    if kind.code == "cw":
        return weak_joint(kernel, x, y)
    if kind.code == "cstar":
        a = kind.up[0]
        return joint_upcross_law(kernel, x, y, a, a)
    if len(kind.local) == 1 and len(kind.up) == 1:
        a, b = kind.local[0], kind.up[0]
        return joint_site_law(kernel, x, y, a, b, a, b)
    raise ValueError(f"pair ratios are not defined for composite kind {kind.label}")


def pair_ratio(kernel: PotentialKernel, kind: SetKind, x: int, y: int) -> float:
    """(D(x,y)/D(x)) * P(x in C, y in C) / (P(x in C) P(y in C)); tends to 1."""
    joint = _joint_prob(kernel, kind, x, y)
    px = membership_prob(kernel, x, kind)
    py = membership_prob(kernel, y, kind)
    return kernel.d_between(x, y) / kernel.d_of(x) * joint / (px * py)


def limit_ratio_report(
    kernel: PotentialKernel,
    kind: SetKind,
    x_grid: Sequence[int],
    gap_grid: Sequence[int] = (),
) -> list[dict]:
    """Rows tracking D(x) P(x in C) -> lambda_C and the pair ratio -> 1.

    Rows with both x >= 1000 and gap >= 1000 carry a ``flag`` set when the
    pair ratio leaves [0.9, 1.1]; elsewhere the columns are reported without
    assertion (the constants in the general inequalities are not pinned).
    """
    lam = lambda_const(kind)
    rows: list[dict] = []
    for x in x_grid:
        row = {
            "kind": kind.label,
            "x": int(x),
            "lambda": lam,
            "d_times_prob": kernel.d_of(x) * membership_prob(kernel, x, kind),
        }
        rows.append(row)
        for gap in gap_grid:
            y = x + int(gap)
            if y > kernel.n_max:
                continue
            ratio = pair_ratio(kernel, kind, x, y)
            cond = _joint_prob(kernel, kind, x, y) / membership_prob(kernel, x, kind)
            rows.append(
                {
                    "kind": kind.label,
                    "x": int(x),
                    "y": y,
                    "lambda": lam,
                    "pair_ratio": ratio,
                    "cond_scaled": cond * kernel.d_between(x, y) * kernel.d_of(y) / kernel.d_of(x),
                    "flag": bool(x >= 1000 and gap >= 1000 and abs(ratio - 1.0) > 0.1),
                }
            )
    return rows
