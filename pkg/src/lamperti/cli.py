"""Command-line entry point: environment tables, exact laws, simulations, verification.

Exit codes: 0 success (and verification pass), 1 verification failure,
2 invalid input.  Natural logarithms everywhere.  Every stochastic output
embeds {seed, family, version, rng} for provenance; CSV bodies are
byte-deterministic for a fixed configuration (the header comment line carries
the provenance fields).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, analytics, branching, oracle, stats, walker
from .analytics import SetKind, parse_kind
from .environment import DriftSpec, Environment, PotentialKernel

__all__ = ["build_parser", "dispatch", "main"]


def _default_workers() -> int:
    return int(os.environ.get("LAMPERTI_WORKERS", "1"))


def _add_family(p: argparse.ArgumentParser):
    p.add_argument(
        "--family",
        required=True,
        help="harmonic | loglog:BETA | table:PATH (table: one p_n per line, "
        "line 1 = p_1, constant continuation beyond the last line)",
    )


def _provenance(args, seed=None) -> dict:
    out = {"version": __version__, "family": args.family}
    if seed is not None:
        out["seed"] = int(seed)
        out["rng"] = branching.RNG_CONTRACT
    return out


def _emit_json(payload: dict, out: str | None):
    text = json.dumps(payload, indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _emit_csv(header: list[str], rows: list[list], meta: dict, out: str | None):
    lines = ["# " + " ".join(f"{k}={v}" for k, v in meta.items())]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_kinds(text: str) -> tuple[SetKind, ...]:
    return tuple(parse_kind(tok) for tok in text.split(",") if tok)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lamperti",
        description="Exact laws and samplers for local times, upcrossings and "
        "weak cutpoints of transient nearest-neighbor walks.",
    )
    workers = argparse.ArgumentParser(add_help=False)
    workers.add_argument(
        "--workers", type=int, default=None, help="worker threads (never affects results)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    env_p = sub.add_parser("env", help="inspect a drift family")
    env_sub = env_p.add_subparsers(dest="env_command", required=True)
    show = env_sub.add_parser("show", help="emit n, p_n, rho_n, D(n), criterion partial sum")
    _add_family(show)
    show.add_argument("--max", type=int, required=True)
    fmt = show.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true")
    fmt.add_argument("--csv", action="store_true")
    show.add_argument("--out")

    exact = sub.add_parser("exact", help="closed-form probabilities")
    exact_sub = exact.add_subparsers(dest="exact_command", required=True)
    site = exact_sub.add_parser("site", help="P(local time = a, upcrossings = b at x)")
    _add_family(site)
    site.add_argument("--x", type=int, required=True)
    site.add_argument("--a", type=int, required=True)
    site.add_argument("--b", type=int, required=True)
    site.add_argument("--out")
    weak = exact_sub.add_parser("weak", help="weak-cutpoint probability at x (and jointly at y)")
    _add_family(weak)
    weak.add_argument("--x", type=int, required=True)
    weak.add_argument("--y", type=int)
    weak.add_argument("--out")
    joint = exact_sub.add_parser("joint", help="two-site joint law; add --a/--n for local times")
    _add_family(joint)
    joint.add_argument("--x", type=int, required=True)
    joint.add_argument("--y", type=int, required=True)
    joint.add_argument("--b", type=int, required=True, help="upcrossings at x")
    joint.add_argument("--m", type=int, required=True, help="upcrossings at y")
    joint.add_argument("--a", type=int, help="local time at x")
    joint.add_argument("--n", type=int, help="local time at y")
    joint.add_argument("--out")
    expected = exact_sub.add_parser("expected", help="E |C intersect [1, n]|")
    _add_family(expected)
    expected.add_argument("--n", type=int, required=True)
    expected.add_argument("--kind", required=True, help="cw | cab:A:B | cstar:A")
    expected.add_argument("--out")

    sim = sub.add_parser("simulate", help="run one of the samplers")
    sim_sub = sim.add_subparsers(dest="simulate_command", required=True)
    br = sim_sub.add_parser(
        "branching", parents=[workers], help="exact O(n) branching-representation sampler"
    )
    _add_family(br)
    br.add_argument("--n", type=int, required=True)
    br.add_argument("--replicas", type=int, required=True)
    br.add_argument("--seed", type=int, required=True)
    br.add_argument("--kinds", default="cw", help="comma-separated, e.g. cw,cab:2:1,cstar:1")
    br.add_argument("--out", help="CSV path (default stdout)")
    wk = sim_sub.add_parser("walk", parents=[workers], help="truncated-horizon ground-truth walker")
    _add_family(wk)
    wk.add_argument("--n", type=int, required=True)
    wk.add_argument("--eps", type=float, required=True, help="per-replica truncation bias bound")
    wk.add_argument("--replicas", type=int, required=True)
    wk.add_argument("--seed", type=int, required=True)
    wk.add_argument("--kinds", default="cw")
    wk.add_argument("--out", help="CSV path (default stdout)")

    ver = sub.add_parser("verify", help="run the cross-check suite")
    ver.add_argument(
        "part",
        choices=["all", "exit", "pgf", "walker", "branching", "samplers", "combinatorics"],
    )
    ver.add_argument("--family", default="harmonic")
    ver.add_argument("--seed", type=int, default=20260809)
    ver.add_argument("--json", dest="json_out", help="write the full report to this path")

    ll = sub.add_parser("limit-law", parents=[workers], help="scaled-count limit-law experiment")
    _add_family(ll)
    ll.add_argument("--n-list", required=True, help="comma-separated checkpoints, e.g. 1000,10000")
    ll.add_argument("--kinds", default="cw,cstar:1")
    ll.add_argument("--replicas", type=int, required=True)
    ll.add_argument("--seed", type=int, required=True)
    ll.add_argument("--out", help="JSON path (default stdout)")
    ll.add_argument("--csv", help="also write rows as CSV to this path")
    return parser


def _cmd_env_show(args) -> int:
    spec = DriftSpec.parse(args.family)
    env = Environment(spec)
    kernel = PotentialKernel.build(env, args.max)
    crit = kernel.criterion_cumulative(args.max) if args.max >= 1 else np.zeros(0)
    rows = []
    for n in range(1, args.max + 1):
        rows.append(
            [
                n,
                env.p_at(n),
                env.rho_at(n),
                kernel.d_of(n),
                float(crit[n - 1]),
            ]
        )
    header = ["n", "p_n", "rho_n", "D_n", "criterion_partial_sum"]
    if args.json:
        payload = {**_provenance(args), "rows": [dict(zip(header, r)) for r in rows]}
        _emit_json(payload, args.out)
    else:
        _emit_csv(header, rows, {"lamperti": __version__, "family": args.family}, args.out)
    return 0


def _kernel_for(args, size: int) -> PotentialKernel:
    spec = DriftSpec.parse(args.family)
    return PotentialKernel.build(Environment(spec), size)


def _cmd_exact(args) -> int:
    cmd = args.exact_command
    if cmd == "site":
        kernel = _kernel_for(args, args.x + 1)
        value, bound = analytics.site_law(kernel, args.x, args.a, args.b), 0.0
        query = {"op": "site", "x": args.x, "a": args.a, "b": args.b}
    elif cmd == "weak":
        if args.y is None:
            kernel = _kernel_for(args, args.x + 1)
            value, bound = analytics.weak_prob(kernel, args.x), 0.0
            query = {"op": "weak", "x": args.x}
        else:
            kernel = _kernel_for(args, args.y + 1)
            value, bound = analytics.weak_joint(kernel, args.x, args.y), 0.0
            query = {"op": "weak-joint", "x": args.x, "y": args.y}
    elif cmd == "joint":
        kernel = _kernel_for(args, args.y + 1)
        if (args.a is None) != (args.n is None):
            raise ValueError("--a and --n must be given together")
        if args.a is None:
            value = analytics.joint_upcross_law(kernel, args.x, args.y, args.b, args.m)
            query = {"op": "joint-upcross", "x": args.x, "y": args.y, "b": args.b, "m": args.m}
        else:
            value = analytics.joint_site_law(
                kernel, args.x, args.y, args.a, args.b, args.n, args.m
            )
            query = {
                "op": "joint-site",
                "x": args.x,
                "y": args.y,
                "a": args.a,
                "b": args.b,
                "n": args.n,
                "m": args.m,
            }
        bound = 0.0
    else:  # expected
        kind = parse_kind(args.kind)
        kernel = _kernel_for(args, args.n)
        value, bound = analytics.expected_count(kernel, args.n, kind), 0.0
        query = {"op": "expected", "n": args.n, "kind": kind.label}
    _emit_json(
        {"query": query, "value": value, "truncation_bound": bound, **_provenance(args)},
        args.out,
    )
    return 0


def _counts_csv(args, kinds, labels, per_replica_counts, scaled, extra_meta) -> int:
    rows = []
    for r in range(per_replica_counts[labels[0]].size):
        for label in labels:
            rows.append([r, label, int(per_replica_counts[label][r]), float(scaled[label][r])])
    meta = {
        "lamperti": __version__,
        "family": args.family,
        "seed": args.seed,
        "rng": branching.RNG_CONTRACT.replace(" ", ""),
        **extra_meta,
    }
    _emit_csv(["replica", "kind", "count", "scaled"], rows, meta, args.out)
    return 0


def _cmd_simulate(args, workers: int) -> int:
    kinds = _parse_kinds(args.kinds)
    if not kinds:
        raise ValueError("--kinds must name at least one site set")
    labels = [k.label for k in kinds]
    if args.simulate_command == "branching":
        kernel = _kernel_for(args, args.n)
        run = branching.run_ensemble(
            kernel, kinds, args.replicas, args.seed, checkpoints=[args.n], workers=workers
        )
        counts = {k.label: run.counts_for(args.n, k) for k in kinds}
        scaled = {k.label: run.scaled_for(args.n, k) for k in kinds}
        return _counts_csv(args, kinds, labels, counts, scaled, {"n": args.n})
    spec = DriftSpec.parse(args.family)
    env = Environment(spec)
    run = walker.walk_ensemble(
        env, args.n, args.eps, args.replicas, args.seed, kinds=kinds, workers=workers
    )
    counts = {k.label: run.counts_for(k) for k in kinds}
    scaled = {k.label: run.scaled_for(k) for k in kinds}
    return _counts_csv(
        args, kinds, labels, counts, scaled, {"n": args.n, "eps": args.eps, "horizon": run.horizon}
    )


def _cmd_verify(args) -> int:
    parts = (args.part,) if args.part != "all" else ("all",)
    config = oracle.CrossCheckConfig(family=args.family, seed=args.seed)
    report = oracle.cross_check_suite(config, parts=parts)
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"{status} {check.name}: |{check.lhs:.6g} - {check.rhs:.6g}| <= {check.tolerance:.3g}")
    print(f"overall: {'PASS' if report.overall else 'FAIL'} ({len(report.checks)} checks)")
    if args.json_out:
        with open(args.json_out, "w") as fh:
            fh.write(report.to_json() + "\n")
    return 0 if report.overall else 1


def _cmd_limit_law(args, workers: int) -> int:
    n_list = [int(tok) for tok in args.n_list.split(",") if tok]
    kinds = _parse_kinds(args.kinds)
    kernel = _kernel_for(args, max(n_list))
    rows = stats.limit_law_report(kernel, n_list, kinds, args.replicas, args.seed, workers=workers)
    payload = {**_provenance(args, seed=args.seed), "replicas": args.replicas, "rows": rows}
    _emit_json(payload, args.out)
    if args.csv:
        header = list(rows[0].keys())
        _emit_csv(
            header,
            [[row[k] for k in header] for row in rows],
            {"lamperti": __version__, "family": args.family, "seed": args.seed},
            args.csv,
        )
    return 0


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    configured = getattr(args, "workers", None)
    workers = configured if configured is not None else _default_workers()
    try:
        if args.command == "env":
            return _cmd_env_show(args)
        if args.command == "exact":
            return _cmd_exact(args)
        if args.command == "simulate":
            return _cmd_simulate(args, workers)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "limit-law":
            return _cmd_limit_law(args, workers)
        raise AssertionError(f"unhandled command {args.command}")
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch())
