"""Counters, potential tracking, and structural checkers.

One :class:`Telemetry` object is shared by every heap in an experiment
universe, so operations that span heaps (meld) stay accountable to a single
potential function:

    phi = sum over nodes of (degree - rank)  +  1 per root  +  2 per marked node

The heap code maintains ``phi`` incrementally as it mutates nodes; the pure
:func:`compute_potential` traversal is the independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator

PHI = (1.0 + math.sqrt(5.0)) / 2.0
_LOG_PHI = math.log(PHI)

#: Numeric slack for real-valued amortized bounds (integer quantities are exact).
SLACK = 1e-9

COUNTER_FIELDS = (
    "fair_links",
    "naive_links",
    "comparisons",
    "iterations",
    "cuts",
    "markings",
    "unmarkings",
    "rank_clamps",
)


def log_phi(n: float) -> float:
    """Logarithm of ``n`` in base golden ratio."""
    return math.log(n) / _LOG_PHI


_FIBS = [0, 1]


def fib(k: int) -> int:
    """F_k with F_0 = 0, F_1 = 1, computed exactly and memoized."""
    if k < 0:
        raise ValueError(f"negative Fibonacci index: {k}")
    while len(_FIBS) <= k:
        _FIBS.append(_FIBS[-1] + _FIBS[-2])
    return _FIBS[k]


def lucas(k: int) -> int:
    """L_k = F_{k-1} + F_{k+1} (L_0 = 2)."""
    if k == 0:
        return 2
    return fib(k - 1) + fib(k + 1)


def fit_exponent(points: Iterable[tuple[float, float]]) -> float:
    """Least-squares slope of log(cost) against log(n).

    Pure closed form; needs at least three points with positive coordinates
    and at least two distinct n values.  Exact power laws come back with
    their exponent to well under 1e-9.
    """
    pts = list(points)
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points, got {len(pts)}")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise ValueError("fit requires positive coordinates")
    lx = [math.log(x) for x, _ in pts]
    ly = [math.log(y) for _, y in pts]
    mx = sum(lx) / len(lx)
    my = sum(ly) / len(ly)
    sxx = sum((a - mx) ** 2 for a in lx)
    if sxx == 0.0:
        raise ValueError("fit requires at least two distinct n values")
    sxy = sum((a - mx) * (b - my) for a, b in zip(lx, ly))
    return sxy / sxx


def fib_dominates_phi_power(k: int) -> bool:
    """Exact-arithmetic check that F_{k+2} >= phi**k.

    phi**k equals (L_k + F_k*sqrt(5)) / 2, so the claim is equivalent to
    d = 2*F_{k+2} - L_k being nonnegative with d*d >= 5*F_k*F_k; both sides
    are plain integers, so no floating point is involved.
    """
    d = 2 * fib(k + 2) - lucas(k)
    return d >= 0 and d * d >= 5 * fib(k) * fib(k)


# ---------------------------------------------------------------------------
# per-operation records


@dataclass
class OpRecord:
    """Counter deltas and potential change for a single heap operation."""

    kind: str
    n_before: int
    fair_links: int = 0
    naive_links: int = 0
    comparisons: int = 0
    iterations: int = 0
    cuts: int = 0
    markings: int = 0
    unmarkings: int = 0
    rank_clamps: int = 0
    d_phi: int = 0

    @property
    def links(self) -> int:
        return self.fair_links + self.naive_links

    @property
    def estimated_time(self) -> float:
        """Cost in the accounting model used by the amortized audit.

        make-heap, find-min, meld and insert cost 1; decrease-key costs
        1 + #cascade-iterations; delete-min costs 1 + log_phi(n) + #links
        with n the heap size when the operation started.
        """
        if self.kind == "decrease-key":
            return 1.0 + self.iterations
        if self.kind == "delete-min":
            return 1.0 + log_phi(max(self.n_before, 1)) + self.links
        return 1.0

    @property
    def amortized_time(self) -> float:
        return self.estimated_time + self.d_phi


class Telemetry:
    """Cumulative counters plus the incrementally maintained potential.

    ``record_sink``, when set, receives every finished :class:`OpRecord`
    (used by the streaming amortized auditor). ``active`` is the shadow
    activity ledger: it marks children that arrived via a fair link and have
    not since been unmarked or cut loose; it exists purely for checking and
    never influences heap behavior.
    """

    __slots__ = COUNTER_FIELDS + (
        "phi",
        "live_nodes",
        "record_sink",
        "last_record",
        "active",
        "track_active",
        "_op_kind",
        "_op_n",
        "_op_base",
    )

    def __init__(self, track_active: bool = False) -> None:
        for name in COUNTER_FIELDS:
            setattr(self, name, 0)
        self.phi = 0
        self.live_nodes = 0
        self.record_sink: Callable[[OpRecord], None] | None = None
        self.last_record: OpRecord | None = None
        self.track_active = track_active
        self.active: dict[Any, bool] = {}
        self._op_kind = ""
        self._op_n = 0
        self._op_base: tuple[int, ...] = ()

    def counters(self) -> dict[str, int]:
        return {name: getattr(self, name) for name in COUNTER_FIELDS}

    @property
    def total_links(self) -> int:
        return self.fair_links + self.naive_links

    def op_begin(self, kind: str, n_before: int) -> None:
        self._op_kind = kind
        self._op_n = n_before
        self._op_base = tuple(getattr(self, f) for f in COUNTER_FIELDS) + (self.phi,)

    def op_end(self) -> OpRecord:
        base = self._op_base
        rec = OpRecord(self._op_kind, self._op_n)
        for i, name in enumerate(COUNTER_FIELDS):
            setattr(rec, name, getattr(self, name) - base[i])
        rec.d_phi = self.phi - base[len(COUNTER_FIELDS)]
        self.last_record = rec
        if self.record_sink is not None:
            self.record_sink(rec)
        return rec


# ---------------------------------------------------------------------------
# pure structural helpers (observers only: no counter is ever touched here)


def iter_subtree(root) -> Iterator:
    """All nodes of the tree rooted at ``root``, iteratively (trees can be
    deep paths, so no recursion)."""
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        child = node.child
        while child is not None:
            stack.append(child)
            child = child.after


def iter_children(node) -> Iterator:
    child = node.child
    while child is not None:
        yield child
        child = child.after


def degree(node) -> int:
    """Number of children, always counted by traversal, never cached."""
    d = 0
    child = node.child
    while child is not None:
        d += 1
        child = child.after
    return d


def subtree_size(root) -> int:
    return sum(1 for _ in iter_subtree(root))


def subtree_sizes(root) -> dict:
    """Size of every subtree under ``root`` in one bottom-up pass."""
    order = list(iter_subtree(root))
    sizes: dict = {}
    for node in reversed(order):
        total = 1
        child = node.child
        while child is not None:
            total += sizes[child]
            child = child.after
        sizes[node] = total
    return sizes


def compute_potential(roots: Iterable) -> int:
    """Potential by full traversal; the oracle for the incremental ``phi``."""
    from .core import MARKED

    phi = 0
    for root in roots:
        phi += 1  # each root contributes one
        for node in iter_subtree(root):
            phi += degree(node) - node.rank
            if node.state == MARKED:
                phi += 2
    return phi


# ---------------------------------------------------------------------------
# checkers


@dataclass
class CheckReport:
    """Outcome of one checker pass over a heap."""

    name: str
    violations: list[str] = field(default_factory=list)
    checked: int = 0
    asserted: bool = True

    @property
    def ok(self) -> bool:
        return not self.violations


def structure_violations(heap) -> CheckReport:
    """Pointer discipline, heap order, rank sanity, and degree >= rank.

    The degree >= rank clause is skipped for the randomized policy: its coin
    may stop a walk before the cut child's parent was decremented, so ranks
    exceeding degrees are within that rule's contract.
    """
    from .core import Policy

    check_degree = heap.policy is not Policy.RANDOMIZED
    report = CheckReport("structure")
    seen = set()
    for root in heap.iter_roots():
        for node in iter_subtree(root):
            report.checked += 1
            if id(node) in seen:
                report.violations.append(f"node {node.uid} reachable twice")
                continue
            seen.add(id(node))
            if node.rank < 0:
                report.violations.append(f"node {node.uid}: negative rank {node.rank}")
            d = 0
            prev = None
            child = node.child
            while child is not None:
                d += 1
                if child.parent is not node:
                    report.violations.append(
                        f"node {child.uid}: parent pointer does not match"
                    )
                if child.before is not prev:
                    report.violations.append(
                        f"node {child.uid}: broken sibling back-link"
                    )
                if child.key < node.key:
                    report.violations.append(
                        f"node {child.uid}: key {child.key!r} below parent's {node.key!r}"
                    )
                prev = child
                child = child.after
            if check_degree and d < node.rank:
                report.violations.append(
                    f"node {node.uid}: degree {d} < rank {node.rank}"
                )
    return report


def rank_bound_violations(heap) -> CheckReport:
    """Subtree-size lower bounds implied by ranks.

    Fibonacci bound (size >= F_{rank+2}) for the policies that preserve the
    full analysis; power-of-two bound (size >= 2**rank) for the eager trio;
    report-only (never asserted) for randomized and non-cascading.
    """
    from .core import Policy

    fib_pols = {
        Policy.SIMPLE,
        Policy.HEAP_ORDER,
        Policy.INCREASING_RANK,
        Policy.PASSIVE_CHILD,
        Policy.CLASSIC,
    }
    pow2_pols = {
        Policy.EAGER_MARKING,
        Policy.NAIVE_INCREASING_RANK,
        Policy.ZERO_RANK,
    }
    pol = heap.policy
    if pol in fib_pols:
        report = CheckReport("rank-bound-fibonacci")
        bound = lambda r: fib(r + 2)
    elif pol in pow2_pols:
        report = CheckReport("rank-bound-pow2")
        bound = lambda r: 1 << r
    else:
        report = CheckReport("rank-bound-report-only", asserted=False)
        bound = lambda r: fib(r + 2)
    for root in heap.iter_roots():
        sizes = subtree_sizes(root)
        for node, size in sizes.items():
            report.checked += 1
            if node.rank >= 0 and size < bound(node.rank):
                report.violations.append(
                    f"node {node.uid}: size {size} < bound {bound(node.rank)}"
                    f" for rank {node.rank}"
                )
    return report


def active_children_violations(heap, active: dict) -> CheckReport:
    """Every node must have at least ``rank`` active children.

    ``active`` is the telemetry shadow ledger (fair-linked and not since
    unmarked). Only meaningful for the policies that keep the classic
    correspondence; the caller decides whether the verdict is asserted.
    """
    report = CheckReport("active-children")
    for root in heap.iter_roots():
        for node in iter_subtree(root):
            report.checked += 1
            live = 0
            child = node.child
            while child is not None:
                if active.get(child, False):
                    live += 1
                child = child.after
            if live < node.rank:
                report.violations.append(
                    f"node {node.uid}: {live} active children < rank {node.rank}"
                )
    return report


def potential_violations(heap) -> CheckReport:
    """Incremental phi must match the traversal and must never be negative.

    Checks the whole universe the heap belongs to, since phi is shared.
    """
    report = CheckReport("potential")
    tele = heap.universe.telemetry
    report.checked = 1
    total = 0
    for h in heap.universe.live_heaps():
        total += compute_potential(h.iter_roots())
    if total != tele.phi:
        report.violations.append(
            f"incremental phi {tele.phi} != recomputed {total}"
        )
    if tele.phi < 0:
        report.violations.append(f"negative phi {tele.phi}")
    return report


# ---------------------------------------------------------------------------
# amortized audit


def audit_violations(rec: OpRecord) -> list[str]:
    """Per-operation potential-change bounds for the baseline policy.

    make-heap / find-min / meld leave phi unchanged; insert raises it by at
    most 1; decrease-key obeys d_phi <= 4 - iterations; delete-min obeys
    d_phi <= 2*log_phi(n) - 1 - links.  The derived amortized costs
    (<= 2 insert, <= 5 decrease-key, <= 3*log_phi(n) delete-min) are checked
    as well; all real-valued comparisons get SLACK.
    """
    out: list[str] = []
    kind = rec.kind

    def fail(bound_name: str, value: float, bound: float) -> None:
        out.append(f"{kind}: {bound_name} {value:.12g} exceeds {bound:.12g}")

    if kind in ("make-heap", "find-min", "meld"):
        if rec.d_phi != 0:
            fail("d_phi", rec.d_phi, 0)
    elif kind == "insert":
        if rec.d_phi > 1 + SLACK:
            fail("d_phi", rec.d_phi, 1)
    elif kind == "decrease-key":
        if rec.d_phi > 4 - rec.iterations + SLACK:
            fail("d_phi", rec.d_phi, 4 - rec.iterations)
        if rec.amortized_time > 5 + SLACK:
            fail("amortized", rec.amortized_time, 5)
    elif kind == "delete-min":
        lg = log_phi(max(rec.n_before, 1))
        if rec.d_phi > 2 * lg - 1 - rec.links + SLACK:
            fail("d_phi", rec.d_phi, 2 * lg - 1 - rec.links)
        if rec.amortized_time > 3 * lg + SLACK:
            fail("amortized", rec.amortized_time, 3 * lg)
    return out


class AmortizedAuditor:
    """Streaming record sink that collects audit violations."""

    def __init__(self, keep: int = 20) -> None:
        self.ops = 0
        self.violation_count = 0
        self.violations: list[str] = []
        self._keep = keep

    def __call__(self, rec: OpRecord) -> None:
        self.ops += 1
        problems = audit_violations(rec)
        if problems:
            self.violation_count += len(problems)
            room = self._keep - len(self.violations)
            if room > 0:
                self.violations.extend(problems[:room])

    @property
    def ok(self) -> bool:
        return self.violation_count == 0
