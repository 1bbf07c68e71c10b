"""Command-line front end: fuzzing, benchmarks, worst-case runs, Dijkstra.

Subcommands
-----------
verify
    Differential fuzz campaigns with the full invariant battery: structure
    checks, rank bounds, the active-children ledger, per-operation
    potential audits, and lockstep comparison against the reference heap.
bench
    Random or drain workloads per policy, emitting counter rows.
adversary
    The self-reproducing worst-case schedules: either a k-sweep of steady
    cycles or whole lower-bound runs of a given operation count; replays
    the identical schedule on the one-tree cascading policy for contrast.
dijkstra
    Single-source shortest paths over a random graph on the selected
    policy heap, verified against a plain binary-heap reference.
replay
    Re-run a recorded trace file against the reference model.

Exit codes: 0 success, 1 a check or comparison failed, 2 usage error.
All measurements except ``wall_time_ns`` come from deterministic counters;
wall time is reported for orientation and never affects the exit code.
"""

from __future__ import annotations

import argparse
import csv
import json
import random
import sys
import time
from dataclasses import dataclass
from heapq import heappop, heappush
from pathlib import Path

from .adversary import (
    AdversaryBuilder,
    ShapeError,
    replay_ops,
    run_lower_bound,
    steady_tree_size,
)
from .core import POLICY_TAGS, HeapError, Policy, Universe
from .instrumentation import AmortizedAuditor, OpRecord, fit_exponent
from .oracle import (
    TraceError,
    TraceProfile,
    gen_trace,
    parse_trace,
    replay_differential,
    run_checks,
)

RESULT_FIELDS = (
    "policy",
    "workload",
    "n",
    "op-kind",
    "fair_links",
    "naive_links",
    "iterations",
    "comparisons",
    "wall_time_ns",
    "phi",
)


@dataclass
class ResultRow:
    policy: str
    workload: str
    n: int
    op_kind: str
    fair_links: int
    naive_links: int
    iterations: int
    comparisons: int
    wall_time_ns: int
    phi: float

    def as_record(self) -> dict:
        return {
            "policy": self.policy,
            "workload": self.workload,
            "n": self.n,
            "op-kind": self.op_kind,
            "fair_links": self.fair_links,
            "naive_links": self.naive_links,
            "iterations": self.iterations,
            "comparisons": self.comparisons,
            "wall_time_ns": self.wall_time_ns,
            "phi": self.phi,
        }


class RowSink:
    """Writes result rows as CSV (header first) or JSON lines."""

    def __init__(self, out: str | None, fmt: str) -> None:
        self._fmt = fmt
        self._file = None
        self._owns = False
        self._writer = None
        if out is None:
            return
        if out == "-":
            self._file = sys.stdout
        else:
            self._file = open(out, "w", newline="")
            self._owns = True

    def write(self, row: ResultRow) -> None:
        if self._file is None:
            return
        record = row.as_record()
        if self._fmt == "csv":
            if self._writer is None:
                self._writer = csv.DictWriter(self._file, fieldnames=RESULT_FIELDS)
                self._writer.writeheader()
            self._writer.writerow(record)
        else:
            self._file.write(json.dumps(record) + "\n")

    def close(self) -> None:
        if self._owns and self._file is not None:
            self._file.close()


def _log(sink: RowSink, message: str) -> None:
    # keep human lines off stdout when the rows go there
    stream = sys.stderr if sink._file is sys.stdout else sys.stdout
    print(message, file=stream)


def _parse_policies(values: list[str] | None, default: list[str]) -> list[Policy]:
    tags: list[str] = []
    for value in values or default:
        tags.extend(t for t in value.split(",") if t)
    if "all" in tags:
        tags = list(POLICY_TAGS)
    out = []
    for tag in tags:
        if tag not in POLICY_TAGS:
            print(
                f"unknown policy {tag!r} (choose from {', '.join(POLICY_TAGS)})",
                file=sys.stderr,
            )
            raise SystemExit(2)
        out.append(Policy.from_tag(tag))
    return out


def _parse_k_spec(spec: str) -> list[int]:
    """"25" -> [25]; "10..100" -> 10,20,...,100; "10..50:5" -> step 5."""
    step = 10
    if ":" in spec:
        spec, step_text = spec.split(":", 1)
        step = int(step_text)
    if ".." in spec:
        lo_text, hi_text = spec.split("..", 1)
        lo, hi = int(lo_text), int(hi_text)
    else:
        lo = hi = int(spec)
    if lo < 1 or hi < lo or step < 1:
        raise ValueError(f"bad k range {spec!r}")
    return list(range(lo, hi + 1, step))


def _aggregate_rows(
    policy: Policy | str,
    workload: str,
    records: list[OpRecord],
    phi: float,
    wall_ns: int,
) -> list[ResultRow]:
    """One row per op kind plus an ``all`` total; only the total carries
    wall time (per-operation timing is not collected)."""
    if isinstance(policy, Policy):
        policy = policy.value
    kinds: dict[str, dict[str, int]] = {}
    for rec in records:
        agg = kinds.setdefault(
            rec.kind,
            {"n": 0, "fair_links": 0, "naive_links": 0, "iterations": 0, "comparisons": 0},
        )
        agg["n"] = max(agg["n"], rec.n_before)
        agg["fair_links"] += rec.fair_links
        agg["naive_links"] += rec.naive_links
        agg["iterations"] += rec.iterations
        agg["comparisons"] += rec.comparisons
    rows = [
        ResultRow(
            policy=policy,
            workload=workload,
            n=agg["n"],
            op_kind=kind,
            fair_links=agg["fair_links"],
            naive_links=agg["naive_links"],
            iterations=agg["iterations"],
            comparisons=agg["comparisons"],
            wall_time_ns=0,
            phi=phi,
        )
        for kind, agg in sorted(kinds.items())
    ]
    rows.append(
        ResultRow(
            policy=policy,
            workload=workload,
            n=max((a["n"] for a in kinds.values()), default=0),
            op_kind="all",
            fair_links=sum(a["fair_links"] for a in kinds.values()),
            naive_links=sum(a["naive_links"] for a in kinds.values()),
            iterations=sum(a["iterations"] for a in kinds.values()),
            comparisons=sum(a["comparisons"] for a in kinds.values()),
            wall_time_ns=wall_ns,
            phi=phi,
        )
    )
    return rows


# ---------------------------------------------------------------------------
# verify


def cmd_verify(args: argparse.Namespace) -> int:
    policies = _parse_policies(args.policy, ["all"])
    sink = RowSink(args.out, args.format)
    failed = False
    try:
        for policy in policies:
            divergences = 0
            check_failures = 0
            audit_violations = 0
            first_problem = ""
            for t in range(args.traces):
                trace_seed = args.seed + t
                profile = TraceProfile(
                    n_ops=args.ops, seed=trace_seed, policy=policy.value
                )
                ops = gen_trace(profile)
                auditor = AmortizedAuditor() if policy is Policy.SIMPLE else None
                records: list[OpRecord] = []

                def tap(rec: OpRecord, auditor=auditor, records=records) -> None:
                    records.append(rec)
                    if auditor is not None:
                        auditor(rec)

                t0 = time.perf_counter_ns()
                verdict = replay_differential(
                    ops,
                    seed=trace_seed,
                    strict_identity=True,
                    check_interval=25,
                    record_sink=tap,
                )
                wall = time.perf_counter_ns() - t0
                if verdict.divergence:
                    divergences += 1
                    first_problem = first_problem or verdict.divergence
                if verdict.check_failures:
                    check_failures += len(verdict.check_failures)
                    first_problem = first_problem or verdict.check_failures[0]
                if auditor is not None and not auditor.ok:
                    audit_violations += auditor.violation_count
                    first_problem = first_problem or auditor.violations[0]
                for row in _aggregate_rows(
                    policy, f"fuzz-seed{trace_seed}", records, 0.0, wall
                ):
                    if row.op_kind == "all":
                        sink.write(row)
            ok = not (divergences or check_failures or audit_violations)
            failed = failed or not ok
            verdict_word = "ok" if ok else "FAIL"
            _log(
                sink,
                f"verify {policy.value}: {args.traces} traces x {args.ops} ops"
                f" — {divergences} divergences, {check_failures} check failures,"
                f" {audit_violations} audit violations [{verdict_word}]"
                + (f" ({first_problem})" if first_problem else ""),
            )
    finally:
        sink.close()
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# bench


def _random_keys(rng: random.Random, count: int) -> list[int]:
    seen: set[int] = set()
    out = []
    while len(out) < count:
        key = rng.randrange(1 << 40)
        if key not in seen:
            seen.add(key)
            out.append(key)
    return out


def _drain_workload(policy: Policy, size: int, seed: int) -> tuple[list[OpRecord], float, int]:
    universe = Universe(seed=seed)
    records: list[OpRecord] = []
    universe.telemetry.record_sink = records.append
    heap = universe.make_heap(policy, "bench")
    rng = random.Random(seed)
    t0 = time.perf_counter_ns()
    for key in _random_keys(rng, size):
        heap.insert(universe.make_item(key))
    while not heap.is_empty:
        heap.delete_min()
    wall = time.perf_counter_ns() - t0
    return records, universe.telemetry.phi, wall


def cmd_bench(args: argparse.Namespace) -> int:
    policies = _parse_policies(args.policy, ["all"])
    sink = RowSink(args.out, args.format)
    failed = False
    try:
        for policy in policies:
            if args.sizes:
                for size in args.sizes:
                    records, phi, wall = _drain_workload(policy, size, args.seed)
                    for row in _aggregate_rows(
                        policy, f"drain-n{size}", records, phi, wall
                    ):
                        sink.write(row)
            else:
                profile = TraceProfile(
                    n_ops=args.ops, seed=args.seed, policy=policy.value
                )
                ops = gen_trace(profile)
                records = []
                t0 = time.perf_counter_ns()
                universe, heaps = replay_ops(
                    ops, seed=args.seed, record_sink=records.append
                )
                wall = time.perf_counter_ns() - t0
                if args.check:
                    problems = []
                    for heap in heaps.values():
                        problems.extend(run_checks(heap))
                    if policy is Policy.SIMPLE:
                        auditor = AmortizedAuditor()
                        for rec in records:
                            auditor(rec)
                        problems.extend(auditor.violations)
                        total_links = (
                            universe.telemetry.fair_links
                            + universe.telemetry.naive_links
                        )
                        if universe.telemetry.comparisons != total_links:
                            problems.append(
                                f"comparisons {universe.telemetry.comparisons}"
                                f" != links {total_links}"
                            )
                    if problems:
                        failed = True
                        _log(sink, f"bench {policy.value}: FAIL {problems[0]}")
                for row in _aggregate_rows(
                    policy,
                    f"random-ops{args.ops}",
                    records,
                    universe.telemetry.phi,
                    wall,
                ):
                    sink.write(row)
    finally:
        sink.close()
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# adversary


def _steady_rows_direct(
    ks: list[int], rounds: int, seed: int, sink: RowSink
) -> list[tuple[float, float]]:
    points = []
    for k in ks:
        builder = AdversaryBuilder(seed=seed)
        builder.build(k)
        tele = builder.universe.telemetry
        builder.start_rounds()
        link_total = 0
        for _ in range(rounds):
            t0 = time.perf_counter_ns()
            stats = builder.steady_round(verify=True)
            wall = time.perf_counter_ns() - t0
            link_total += stats.fair_links + stats.naive_links
            sink.write(
                ResultRow(
                    policy=Policy.NON_CASCADING.value,
                    workload=f"steady-k{k}",
                    n=stats.n_before,
                    op_kind="delete-min",
                    fair_links=stats.fair_links,
                    naive_links=stats.naive_links,
                    iterations=stats.iterations,
                    comparisons=stats.comparisons,
                    wall_time_ns=wall,
                    phi=tele.phi,
                )
            )
        points.append((steady_tree_size(k), link_total / rounds))
    return points


def _steady_rows_replayed(
    ks: list[int], rounds: int, seed: int, policy: Policy, sink: RowSink
) -> list[tuple[float, float]]:
    points = []
    for k in ks:
        builder = AdversaryBuilder(seed=seed, recording=True)
        builder.build(k)
        builder.run_rounds(rounds, verify=False)
        records: list[OpRecord] = []
        t0 = time.perf_counter_ns()
        universe, _ = replay_ops(
            builder.trace, policy=policy, seed=seed, record_sink=records.append
        )
        wall = time.perf_counter_ns() - t0
        deletes = [r for r in records if r.kind == "delete-min"][-rounds:]
        for rec in deletes:
            sink.write(
                ResultRow(
                    policy=policy.value,
                    workload=f"steady-k{k}",
                    n=rec.n_before,
                    op_kind="delete-min",
                    fair_links=rec.fair_links,
                    naive_links=rec.naive_links,
                    iterations=rec.iterations,
                    comparisons=rec.comparisons,
                    wall_time_ns=0,
                    phi=universe.telemetry.phi,
                )
            )
        links = [r.fair_links + r.naive_links for r in deletes]
        points.append((steady_tree_size(k), sum(links) / len(links)))
        _log(sink, f"adversary k={k}: replay wall {wall} ns")
    return points


def cmd_adversary(args: argparse.Namespace) -> int:
    policies = _parse_policies(args.policy, [Policy.NON_CASCADING.value])
    if len(policies) != 1 or policies[0] not in (
        Policy.NON_CASCADING,
        Policy.SIMPLE,
    ):
        print(
            "adversary takes exactly one policy: non-cascading or simple",
            file=sys.stderr,
        )
        raise SystemExit(2)
    policy = policies[0]
    sink = RowSink(args.out, args.format)
    failed = False
    try:
        if args.m:
            ms = sorted(args.m)
            if args.check and len(ms) == 1:
                ms = sorted({ms[0] // 10, 3 * ms[0] // 10, ms[0]})
            points = []
            for m in ms:
                result, builder = run_lower_bound(m, seed=args.seed)
                tele = builder.universe.telemetry
                sink.write(
                    ResultRow(
                        policy=policy.value,
                        workload=f"lower-bound-m{m}",
                        n=result.final_size,
                        op_kind="all",
                        fair_links=result.total_fair_links,
                        naive_links=result.total_naive_links,
                        iterations=tele.iterations,
                        comparisons=tele.comparisons,
                        wall_time_ns=0,
                        phi=tele.phi,
                    )
                )
                points.append((result.total_ops, result.total_est_time))
                _log(
                    sink,
                    f"adversary m={m}: k={result.k} rounds={result.rounds}"
                    f" est-total={result.total_est_time:.1f}",
                )
            if len(points) >= 3:
                slope = fit_exponent(points)
                _log(sink, f"adversary total-cost exponent vs m: {slope:.4f}")
                if args.check and slope < 1.25:
                    failed = True
                    _log(sink, f"FAIL: exponent {slope:.4f} < 1.25")
        else:
            ks = args.k
            if policy is Policy.NON_CASCADING:
                points = _steady_rows_direct(ks, args.rounds, args.seed, sink)
                lo, hi = 0.45, 0.55
            else:
                points = _steady_rows_replayed(
                    ks, args.rounds, args.seed, policy, sink
                )
                lo, hi = None, 0.1
            if len(points) >= 3:
                slope = fit_exponent(points)
                _log(
                    sink,
                    f"adversary links-per-delete-min exponent vs n"
                    f" ({policy.value}): {slope:.4f}",
                )
                if args.check:
                    if (lo is not None and slope < lo) or slope > hi:
                        failed = True
                        band = f"<= {hi}" if lo is None else f"[{lo}, {hi}]"
                        _log(sink, f"FAIL: exponent {slope:.4f} outside {band}")
            elif args.check:
                _log(sink, "note: fewer than 3 k values, no exponent fit")
    except ShapeError as exc:
        _log(sink, f"FAIL: {exc}")
        failed = True
    finally:
        sink.close()
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# dijkstra


@dataclass
class Graph:
    vertices: int
    edges: list[tuple[int, int, int]]
    seed: int

    def adjacency(self) -> list[list[tuple[int, int]]]:
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.vertices)]
        for u, v, w in self.edges:
            adj[u].append((v, w))
        return adj


def gen_graph(vertices: int, edges: int, seed: int) -> Graph:
    """Uniform random simple directed graph; weights uniform in [0, 2^32)."""
    if vertices < 2 or edges > vertices * (vertices - 1):
        raise ValueError("impossible graph dimensions")
    rng = random.Random(seed)
    seen: set[int] = set()
    out: list[tuple[int, int, int]] = []
    while len(out) < edges:
        u = rng.randrange(vertices)
        v = rng.randrange(vertices)
        if u == v:
            continue
        code = u * vertices + v
        if code in seen:
            continue
        seen.add(code)
        out.append((u, v, rng.getrandbits(32)))
    return Graph(vertices=vertices, edges=out, seed=seed)


def dijkstra_reference(adj: list[list[tuple[int, int]]], source: int = 0) -> list[int | None]:
    dist: list[int | None] = [None] * len(adj)
    pq: list[tuple[int, int]] = [(0, source)]
    while pq:
        d, u = heappop(pq)
        if dist[u] is not None:
            continue
        dist[u] = d
        for v, w in adj[u]:
            if dist[v] is None:
                heappush(pq, (d + w, v))
    return dist


UNREACHED = 1 << 62  # above any real path length at these sizes


def dijkstra_policy(
    graph: Graph,
    adj: list[list[tuple[int, int]]],
    policy: Policy,
    seed: int,
    source: int = 0,
) -> tuple[list[int | None], dict, int]:
    """All vertices go in up front at an unreached sentinel key; relaxing an
    edge is a decrease-key, settling a vertex is a delete-min."""
    universe = Universe(seed=seed)
    heap = universe.make_heap(policy, "sssp")
    nodes = [
        universe.make_item(0 if v == source else UNREACHED, info=v)
        for v in range(graph.vertices)
    ]
    for node in nodes:
        heap.insert(node)
    dist: list[int | None] = [None] * graph.vertices
    decrease_calls = 0
    delete_calls = 0
    while not heap.is_empty:
        node = heap.delete_min()
        delete_calls += 1
        if node.key >= UNREACHED:
            break
        u = node.info
        dist[u] = node.key
        for v, w in adj[u]:
            other = nodes[v]
            alt = node.key + w
            if other.in_heap and alt < other.key:
                heap.decrease_key(other, alt)
                decrease_calls += 1
    stats = dict(universe.telemetry.counters())
    stats["decrease_calls"] = decrease_calls
    stats["delete_calls"] = delete_calls
    return dist, stats, universe.telemetry.phi


def cmd_dijkstra(args: argparse.Namespace) -> int:
    policies = _parse_policies(args.policy, ["all"])
    sink = RowSink(args.out, args.format)
    failed = False
    try:
        graph = gen_graph(args.vertices, args.edges, args.seed)
        adj = graph.adjacency()
        reference = dijkstra_reference(adj)
        for policy in policies:
            t0 = time.perf_counter_ns()
            dist, stats, phi = dijkstra_policy(graph, adj, policy, args.seed)
            wall = time.perf_counter_ns() - t0
            problems = []
            if dist != reference:
                bad = next(
                    i for i in range(graph.vertices) if dist[i] != reference[i]
                )
                problems.append(
                    f"distance mismatch at vertex {bad}:"
                    f" {dist[bad]} != {reference[bad]}"
                )
            if args.check:
                if stats["decrease_calls"] > len(graph.edges):
                    problems.append("more decrease-keys than edges")
                if stats["delete_calls"] > graph.vertices:
                    problems.append("more delete-mins than vertices")
                links = stats["fair_links"] + stats["naive_links"]
                if policy is Policy.SIMPLE and stats["comparisons"] != links:
                    problems.append(
                        f"comparisons {stats['comparisons']} != links {links}"
                    )
            if problems:
                failed = True
                _log(sink, f"dijkstra {policy.value}: FAIL {problems[0]}")
            else:
                _log(
                    sink,
                    f"dijkstra {policy.value}: {graph.vertices} vertices"
                    f" {len(graph.edges)} edges ok"
                    f" ({stats['decrease_calls']} decrease-keys)",
                )
            sink.write(
                ResultRow(
                    policy=policy.value,
                    workload=f"dijkstra-v{graph.vertices}-e{len(graph.edges)}",
                    n=graph.vertices,
                    op_kind="all",
                    fair_links=stats["fair_links"],
                    naive_links=stats["naive_links"],
                    iterations=stats["iterations"],
                    comparisons=stats["comparisons"],
                    wall_time_ns=wall,
                    phi=phi,
                )
            )
    finally:
        sink.close()
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# replay


def cmd_replay(args: argparse.Namespace) -> int:
    if args.trace == "-":
        text = sys.stdin.read()
    else:
        text = Path(args.trace).read_text()
    ops = parse_trace(text)
    sink = RowSink(args.out, args.format)
    try:
        records: list[OpRecord] = []
        t0 = time.perf_counter_ns()
        verdict = replay_differential(
            ops,
            policy=args.policy[0] if args.policy else None,
            seed=args.seed,
            strict_identity=args.strict,
            check_interval=25 if args.check else 0,
            record_sink=records.append,
        )
        wall = time.perf_counter_ns() - t0
        name = "stdin" if args.trace == "-" else Path(args.trace).name
        for row in _aggregate_rows(verdict.policy, f"replay-{name}", records, 0.0, wall):
            sink.write(row)
        if verdict.ok:
            _log(sink, f"replay {name}: {verdict.steps} ops ok ({verdict.policy})")
            return 0
        detail = verdict.divergence or verdict.check_failures[0]
        _log(sink, f"replay {name}: FAIL at op {verdict.step_index}: {detail}")
        return 1
    finally:
        sink.close()


# ---------------------------------------------------------------------------
# argument plumbing


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fibcascade",
        description="heap policy laboratory: fuzzing, audits, worst cases",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, default_out: str | None) -> None:
        p.add_argument(
            "--policy",
            action="append",
            metavar="TAG",
            help=f"policy tag or comma list ({', '.join(POLICY_TAGS)}, all)",
        )
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=default_out, metavar="PATH")
        p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
        p.add_argument(
            "--check", action="store_true", help="enable the invariant suite"
        )

    p = sub.add_parser("verify", help="differential fuzzing with audits")
    common(p, None)
    p.add_argument("--traces", type=int, default=100)
    p.add_argument("--ops", type=int, default=1000)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="counter benchmarks")
    common(p, "-")
    p.add_argument("--ops", type=int, default=2000)
    p.add_argument(
        "--sizes",
        type=_int_list,
        default=None,
        metavar="N,N,...",
        help="insert-then-drain workloads of these sizes instead of a random trace",
    )
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("adversary", help="worst-case schedules")
    common(p, "-")
    p.add_argument(
        "--k",
        type=_parse_k_spec,
        default=_parse_k_spec("10..100"),
        metavar="K|LO..HI[:STEP]",
        help="steady-cycle stage sweep (default 10..100 step 10)",
    )
    p.add_argument("--rounds", type=int, default=50)
    p.add_argument(
        "--m",
        action="append",
        type=int,
        metavar="OPS",
        help="run whole lower-bound schedules of this many operations"
        " (repeatable; with --check a single value expands to m/10, 3m/10, m)",
    )
    p.set_defaults(func=cmd_adversary)

    p = sub.add_parser("dijkstra", help="shortest paths vs reference")
    common(p, "-")
    p.add_argument("--vertices", type=int, default=1000)
    p.add_argument("--edges", type=int, default=10000)
    p.set_defaults(func=cmd_dijkstra)

    p = sub.add_parser("replay", help="re-run a recorded trace")
    common(p, None)
    p.add_argument("trace", help="trace file path, or - for stdin")
    p.add_argument(
        "--strict",
        action="store_true",
        help="also require identity-level agreement on delete-min",
    )
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (TraceError, HeapError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
