"""Worst-case schedules for the non-cascading policy, built from legal ops.

The target family: ``staircase(k)`` — here called the T-shapes — is a root
whose children are perfect "brooms" S_0..S_{k-1}: S_r is a rank-r node with
exactly r rank-0 leaf children.  On a heap whose decrease-key never cascades,
this shape is self-reproducing: one insert keyed just above the root followed
by one delete-min rebuilds it exactly, and the delete-min pays k fair links
every time — Theta(sqrt(n)) for a heap of n = 1 + k(k+1)/2 nodes.

The builder grows the shape bottom-up through phases.  Phase k turns the
complete k-stage shape into the complete (k+1)-stage one via k conversion
steps and one promoting insert.  One conversion step (2 inserts, 1
delete-min, i-1 decrease-keys) rebuilds the missing broom one index down:
the two fresh nodes are keyed to steer consolidation — the first fresh node
sweeps up the low brooms' roots with fair links, then loses to the root of
S_{i-1}, which thereby becomes a perfect S_i; the decrease-keys then pull
the swallowed roots back out (their keys unchanged), each pull shaving one
rank off the fresh node until it is an honest rank-0 leaf.

Everything depends on the heap core's pinned orders: children are prepended,
delete-min scans children first to last, the registry slot is cleared before
each fair link, and the final sweep goes over ascending ranks with the
accumulated root as first (tie-winning) link argument.  Key choices that make
the right nodes win are asserted before every delete-min, and
:func:`verify_t_shape` re-derives the shape from the raw pointers, so a
violated assumption fails loudly instead of producing a subtly wrong run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .core import Heap, Node, Policy, Universe
from .instrumentation import (
    OpRecord,
    degree,
    iter_children,
    subtree_size,
)

SIGMA_STRIDE = 1 << 16  # low zone: root-line keys (initial roots, promotes, repulls)
RUNG_BASE = 1 << 50  # high zone: broom roots and their leaves
RUNG_STRIDE = 1 << 20


def steady_tree_size(k: int) -> int:
    """Node count of the complete k-stage shape: root plus brooms S_0..S_{k-1}."""
    return 1 + k * (k + 1) // 2


def build_ops_needed(k: int) -> int:
    """Heap operations the builder spends to reach the k-stage shape.

    Two initial inserts, then phase j costs sum(i + 2 for i in j..1) + 1 =
    j(j+1)/2 + 2j + 1 operations.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    return 2 + sum(j * (j + 1) // 2 + 2 * j + 1 for j in range(1, k))


class ShapeError(AssertionError):
    """The heap does not have the arrangement the construction relies on."""


class _KeyAllocator:
    """Key zones keeping every comparison's winner predetermined.

    Low zone: an ascending counter striding by 2**16; each stride ceiling is
    handed to a node that must sit directly above the root (a promoted S_0 or
    a re-pulled leaf), leaving the 65535 keys underneath for the steady
    rounds' inserts, which go root_key + 1, +2, ...

    High zone (from 2**50): broom keys.  Each phase's new S_1 root tops all
    previous high keys by a 2**20 stride; conversion pairs for rebuilding
    S_i live in the gap just above the current S_{i-1} root, below the next
    broom root up, allocated by a per-gap ascending counter so revisiting a
    gap in a later phase never collides.
    """

    def __init__(self) -> None:
        self._low = 0
        self._round_cursor: int | None = None
        self._round_limit = 0
        self._rung_top = RUNG_BASE
        self._gap_next: dict[int, int] = {}

    def barrier(self) -> int:
        self._low += SIGMA_STRIDE
        return self._low

    def start_rounds(self, root_key: int, ceiling: int) -> None:
        if not root_key < ceiling:
            raise ShapeError(
                f"round window is empty: root {root_key} !< ceiling {ceiling}"
            )
        self._round_cursor = root_key + 1
        self._round_limit = ceiling

    def round_key(self) -> int:
        assert self._round_cursor is not None, "start_rounds was never called"
        key = self._round_cursor
        if key >= self._round_limit:
            raise ShapeError(
                f"steady-round keys exhausted at {key} (limit {self._round_limit})"
            )
        self._round_cursor += 1
        return key

    def top_rung_pair(self) -> tuple[int, int]:
        kappa = self._rung_top + RUNG_STRIDE
        lam = kappa + 1
        self._rung_top = lam
        return kappa, lam

    def gap_pair(self, lower: int, upper: int | None) -> tuple[int, int]:
        off = self._gap_next.get(lower, 2)
        if off + 1 >= RUNG_STRIDE:
            raise ShapeError(f"gap above {lower} is exhausted")
        self._gap_next[lower] = off + 2
        kappa, lam = lower + off, lower + off + 1
        if upper is not None and lam >= upper:
            raise ShapeError(
                f"conversion pair {kappa},{lam} does not fit below {upper}"
            )
        return kappa, lam


# ---------------------------------------------------------------------------
# shape verification (from raw pointers; never trusts the builder's notes)


def broom_problems(root: Node, r: int) -> list[str]:
    """Check that ``root`` heads a perfect rank-r broom."""
    out: list[str] = []
    if root.rank != r:
        out.append(f"broom root {root.uid}: rank {root.rank}, expected {r}")
    kids = list(iter_children(root))
    if len(kids) != r:
        out.append(
            f"broom root {root.uid}: {len(kids)} children, expected {r}"
        )
    for leaf in kids:
        if leaf.rank != 0:
            out.append(f"leaf {leaf.uid}: rank {leaf.rank} != 0")
        if leaf.child is not None:
            out.append(f"leaf {leaf.uid}: has children")
        if not leaf.key > root.key:
            out.append(f"leaf {leaf.uid}: key not above broom root")
    return out


def verify_t_shape(heap: Heap, k: int, missing: int | None = None) -> list[str]:
    """Problems with reading the heap as the k-stage shape.

    ``missing`` is the absent broom index mid-conversion; ``None`` means the
    complete shape (brooms 0..k-1, as after a build or a steady round).
    Child order is not constrained — a freshly promoted S_0 sits first, a
    settled one last; both are the same shape.
    """
    expected = set(range(k)) if missing is None else set(range(k + 1)) - {missing}
    out: list[str] = []
    root = heap.root
    if root is None:
        return [f"expected the {k}-stage shape, heap is empty"]
    if not heap.universe.registry_is_clear():
        out.append("rank registry is not empty between operations")
    want_size = 1 + sum(r + 1 for r in expected)
    got_size = len(heap)
    if got_size != want_size:
        out.append(f"heap size {got_size}, expected {want_size}")
    ranks: list[int] = []
    for child in iter_children(root):
        ranks.append(child.rank)
        out.extend(broom_problems(child, child.rank))
        if not child.key > root.key:
            out.append(f"broom {child.uid}: key not above the tree root")
    if sorted(ranks) != sorted(expected):
        out.append(
            f"child ranks {sorted(ranks)} != expected {sorted(expected)};"
            " a consolidation met roots in an unplanned order"
            " (check child-prepend / first-to-last scan assumptions)"
        )
    return out


# ---------------------------------------------------------------------------
# the builder


@dataclass
class RoundStats:
    """One steady round: insert + delete-min.

    All counters are the delete-min's own (the insert contributes one naive
    link and one comparison, booked to its own record, not here)."""

    n_before: int  # heap size going into the delete-min
    fair_links: int
    naive_links: int
    iterations: int
    comparisons: int
    est_time: float  # of the delete-min


@dataclass
class BuildStats:
    k: int
    ops: int
    est_time: float


@dataclass
class LowerBoundResult:
    """One whole worst-case schedule: build + alternating insert/delete-min."""

    m: int
    k: int
    build_ops: int
    rounds: int
    total_ops: int
    total_est_time: float
    total_fair_links: int
    total_naive_links: int
    final_size: int
    rounds_sample: list[RoundStats] = field(default_factory=list)


class AdversaryBuilder:
    """Drives a non-cascading heap through the worst-case construction.

    All mutations go through the public heap operations; ``recording=True``
    additionally logs every operation in the replayable trace format, so the
    very same schedule can be rerun on other policies.
    """

    def __init__(self, seed: int = 0, recording: bool = False) -> None:
        self.universe = Universe(seed=seed)
        self.heap = self.universe.make_heap(Policy.NON_CASCADING, "h0")
        self.alloc = _KeyAllocator()
        self.rungs: dict[int, Node] = {}  # broom index -> its root node
        self.s0: Node | None = None  # current S_0 (rank-0 child of the root)
        self.k = 0
        self.op_count = 0
        self.est_total = 0.0
        self.trace: list[tuple] = []
        self._recording = recording
        self._names: dict[int, str] = {}
        self._pending: list[OpRecord] = []
        self.universe.telemetry.record_sink = self._sink
        if recording:
            self.trace.append(("newheap", "h0", Policy.NON_CASCADING.value))

    # -- plumbing -----------------------------------------------------------

    def _sink(self, rec: OpRecord) -> None:
        self.est_total += rec.estimated_time
        self._pending.append(rec)

    def _take_records(self) -> list[OpRecord]:
        out, self._pending = self._pending, []
        return out

    def _insert(self, key: int) -> Node:
        node = self.universe.make_item(key)
        if self._recording:
            name = f"x{node.uid}"
            self._names[node.uid] = name
            self.trace.append(("insert", "h0", name, key))
        self.heap.insert(node)
        self.op_count += 1
        return node

    def _delete_min(self) -> Node:
        if self._recording:
            self.trace.append(("deletemin", "h0"))
        removed = self.heap.delete_min()
        self.op_count += 1
        return removed

    def _decrease_key(self, node: Node, key: int) -> None:
        if self._recording:
            self.trace.append(("decreasekey", self._names[node.uid], key))
        self.heap.decrease_key(node, key)
        self.op_count += 1

    def _require(self, cond: bool, msg: str) -> None:
        if not cond:
            raise ShapeError(msg)

    def _verify(self, k: int, missing: int | None = None) -> None:
        problems = verify_t_shape(self.heap, k, missing)
        if problems:
            raise ShapeError("; ".join(problems[:4]))

    # -- construction -------------------------------------------------------

    def build(self, k: int, verify_each_step: bool = False) -> BuildStats:
        """Grow the complete k-stage shape from nothing."""
        self._require(self.k == 0 and len(self.heap) == 0, "build on a used heap")
        self._require(k >= 1, "k must be at least 1")
        root = self._insert(self.alloc.barrier())
        first = self._insert(self.alloc.barrier())
        self._require(self.heap.root is root, "initial insert order broke")
        self.s0 = first
        self.k = 1
        for phase in range(1, k):
            for i in range(phase, 0, -1):
                self._convert(phase, i)
                if verify_each_step and i > 1:
                    self._verify(phase, missing=i - 1)
            self._promote()
            self.k = phase + 1
            self._verify(self.k)
        if k == 1:
            self._verify(1)
        expected_ops = build_ops_needed(k)
        self._require(
            self.op_count == expected_ops,
            f"build used {self.op_count} ops, expected {expected_ops}",
        )
        return BuildStats(k=k, ops=self.op_count, est_time=self.est_total)

    def _convert(self, k: int, i: int) -> None:
        """Rebuild the missing broom one index down: the shape goes from
        "brooms 0..k minus S_i" to "brooms 0..k minus S_{i-1}"."""
        alloc = self.alloc
        heap = self.heap
        old_root = heap.root
        assert old_root is not None
        if i == 1:
            kappa_key, lam_key = alloc.top_rung_pair()
            chi = None
        else:
            chi = self.rungs[i - 1]
            upper = self.rungs[i - 2].key if i >= 3 else None
            kappa_key, lam_key = alloc.gap_pair(chi.key, upper)
        kappa = self._insert(kappa_key)
        lam = self._insert(lam_key)

        # the key orderings the coming consolidation counts on
        sigma = self.s0
        self._require(sigma is not None, "conversion needs an S_0 in place")
        assert sigma is not None
        self._require(old_root.key < sigma.key, "root is not the minimum")
        self._require(kappa.key < lam.key, "fresh pair out of order")
        if chi is not None:
            self._require(sigma.key < chi.key, "S_0 must outrank only the root")
            self._require(
                chi.key < kappa.key,
                "the S_{i-1} root must be smallest among the linked roots",
            )
            for j in range(1, i - 1):
                self._require(
                    kappa.key < self.rungs[j].key,
                    "the first fresh node must undercut the low broom roots",
                )

        before = self.universe.telemetry.counters()
        removed = self._delete_min()
        delta = {
            f: self.universe.telemetry.counters()[f] - before[f]
            for f in ("fair_links", "naive_links")
        }
        self._require(removed is old_root, "delete-min removed a non-root")
        self._require(heap.root is sigma, "the old S_0 did not become the root")
        self._require(
            delta["fair_links"] == i and delta["naive_links"] == k - i + 1,
            f"conversion consolidation did {delta['fair_links']} fair /"
            f" {delta['naive_links']} naive links, expected {i} / {k - i + 1}",
        )

        if i == 1:
            self.rungs[1] = kappa
            self.s0 = None
        else:
            # pull the swallowed roots back out from under the fresh node;
            # the first pull rehomes the second fresh node next to the root
            self._decrease_key(lam, alloc.barrier())
            for j in range(1, i - 1):
                self._decrease_key(self.rungs[j], self.rungs[j].key)
            self._require(kappa.rank == 0, "fresh node kept rank after pulls")
            self._require(
                degree(kappa) == 0, "fresh node kept children after pulls"
            )
            assert chi is not None
            self._require(
                chi.rank == i, f"rebuilt broom has rank {chi.rank}, wanted {i}"
            )
            self.rungs[i] = self.rungs.pop(i - 1)
            self.s0 = lam

    def _promote(self) -> None:
        """One insert turns the gapless shape into the next complete one."""
        self._require(self.s0 is None, "promote expects no S_0 in place")
        root = self.heap.root
        assert root is not None
        self.s0 = self._insert(self.alloc.barrier())
        self._require(
            self.heap.root is root, "promoting insert displaced the root"
        )

    # -- the steady cycle ---------------------------------------------------

    def start_rounds(self) -> None:
        assert self.s0 is not None and self.heap.root is not None
        self.alloc.start_rounds(self.heap.root.key, self.s0.key)

    def steady_round(self, verify: bool = True) -> RoundStats:
        """Insert just above the root, delete-min, land on the same shape."""
        heap = self.heap
        k = self.k
        old_root = heap.root
        sigma = self.s0
        assert old_root is not None and sigma is not None
        key = self.alloc.round_key()
        self._require(
            old_root.key < key < sigma.key,
            "round key must fall between the root and everything else",
        )
        fresh = self._insert(key)
        self._take_records()
        n_before = len(heap)
        removed = self._delete_min()
        (rec,) = self._take_records()
        self._require(removed is old_root, "round delete-min missed the root")
        self._require(heap.root is fresh, "round insert did not take the root")
        self._require(
            rec.fair_links == k and rec.naive_links == 0,
            f"round delete-min did {rec.fair_links} fair / {rec.naive_links}"
            f" naive links, expected {k} / 0",
        )
        if verify:
            self._verify(k)
        return RoundStats(
            n_before=n_before,
            fair_links=rec.fair_links,
            naive_links=rec.naive_links,
            iterations=rec.iterations,
            comparisons=rec.comparisons,
            est_time=rec.estimated_time,
        )

    def run_rounds(self, rounds: int, verify: bool = True) -> list[RoundStats]:
        self.start_rounds()
        return [self.steady_round(verify=verify) for _ in range(rounds)]


def max_k_within(budget_ops: float) -> int:
    """Largest k whose build fits in the given operation budget."""
    k = 1
    while build_ops_needed(k + 1) <= budget_ops:
        k += 1
    return k


def run_lower_bound(
    m: int,
    seed: int = 0,
    recording: bool = False,
    verify_rounds: int = 3,
) -> tuple[LowerBoundResult, AdversaryBuilder]:
    """The m-operation worst-case schedule: build the largest shape within
    m/3 operations, then alternate insert / delete-min for the rest.

    Shape verification is spot-checked (first/last ``verify_rounds`` rounds);
    every round still asserts the exact k fair links, which is the property
    the cost bound rides on.
    """
    if m < 12:
        raise ValueError("schedule too small to build anything")
    k = max_k_within(m / 3)
    builder = AdversaryBuilder(seed=seed, recording=recording)
    builder.build(k)
    rounds = (m - builder.op_count) // 2
    builder.start_rounds()
    sample: list[RoundStats] = []
    for r in range(rounds):
        verify = r < verify_rounds or r >= rounds - verify_rounds
        stats = builder.steady_round(verify=verify)
        if verify:
            sample.append(stats)
    tele = builder.universe.telemetry
    result = LowerBoundResult(
        m=m,
        k=k,
        build_ops=build_ops_needed(k),
        rounds=rounds,
        total_ops=builder.op_count,
        total_est_time=builder.est_total,
        total_fair_links=tele.fair_links,
        total_naive_links=tele.naive_links,
        final_size=len(builder.heap),
        rounds_sample=sample,
    )
    return result, builder


def replay_ops(
    ops: Any,
    policy: Policy | str | None = None,
    seed: int = 0,
    record_sink: Any = None,
    track_active: bool = False,
    on_op: Any = None,
) -> tuple[Universe, dict[str, Heap]]:
    """Execute a trace (no reference mirror) and hand back the end state.

    Used to rerun recorded adversary schedules on other policies and to
    verify that a dumped trace rebuilds the shape it came from.  ``on_op``
    is called as ``on_op(index, universe, heaps)`` after every operation,
    for callers that want to inspect intermediate states.
    """
    if isinstance(policy, str):
        policy = Policy.from_tag(policy)
    universe = Universe(seed=seed, track_active=track_active)
    if record_sink is not None:
        universe.telemetry.record_sink = record_sink
    heaps: dict[str, Heap] = {}
    items: dict[str, Node] = {}
    for index, op in enumerate(ops):
        verb = op[0]
        if verb == "newheap":
            pol = policy if policy is not None else Policy.from_tag(op[2])
            heaps[op[1]] = universe.make_heap(pol, op[1])
        elif verb == "item":
            items[op[1]] = universe.make_item(op[2], info=op[1])
        elif verb == "insert":
            if len(op) == 4:
                items[op[2]] = universe.make_item(op[3], info=op[2])
            heaps[op[1]].insert(items[op[2]])
        elif verb == "deletemin":
            heaps[op[1]].delete_min()
        elif verb == "decreasekey":
            node = items[op[1]]
            top = node
            while top.parent is not top:
                top = top.parent
            for heap in heaps.values():
                if heap.root is top or (
                    heap.policy is Policy.CLASSIC and top in heap.roots
                ):
                    heap.decrease_key(node, op[2])
                    break
            else:
                raise ValueError(f"item {op[1]!r} is in no live heap")
        elif verb == "delete":
            node = items[op[1]]
            top = node
            while top.parent is not top:
                top = top.parent
            for heap in heaps.values():
                if heap.root is top or (
                    heap.policy is Policy.CLASSIC and top in heap.roots
                ):
                    heap.delete(node)
                    break
        elif verb == "meld":
            heaps[op[1]].meld(heaps[op[2]])
            del heaps[op[2]]
        elif verb == "findmin":
            heaps[op[1]].find_min()
        else:
            raise ValueError(f"unknown trace verb {verb!r}")
        if on_op is not None:
            on_op(index, universe, heaps)
    return universe, heaps
