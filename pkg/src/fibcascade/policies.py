"""The pluggable part of decrease-key: rank maintenance.

Every policy here follows the same skeleton — optionally walk up from the
decreased node fixing ranks and states, then cut the node and naive-link it
back against the root (the cut node is the first link argument, so it wins
ties).  What varies is the walk: when it starts, what it decrements, and how
it decides to stop.

The walks terminate at the root without special-casing it: the policies that
use node states pin the root's state beforehand so the stop test fires there,
and the rank-comparison stops are self-satisfied at the root because a root
is its own parent.

All rank decrements clamp at zero (and count the clamped attempts); the walk
step counter feeds the per-operation time estimate.
"""

from __future__ import annotations

from typing import Callable

from .core import (
    MARKED,
    PASSIVE,
    UNMARKED,
    Heap,
    Node,
    Policy,
    dec_rank_floor,
    set_state,
)

# Test hook: when True, the plain cascade forgets to unmark the nodes it
# walks through.  Exists so the audit layer can be shown to catch a real
# bookkeeping bug; never set outside tests.
_TEST_SKIP_UNMARK = False


def _cut_and_reroot(heap: Heap, x: Node) -> None:
    heap._cut(x)
    heap._reroot_link(x)


def _toggle_walk(heap: Heap, x: Node) -> None:
    """Shared cascade of the plain and heap-order policies.

    Each step decrements an ancestor's rank and flips its state; a node that
    was already marked has now paid for two lost children, so it is reset and
    the walk continues to charge its parent.  A freshly marked node absorbs
    the half-loss and stops the walk.  The root is unmarked up front, which
    makes it a guaranteed stopping point.
    """
    tele = heap.universe.telemetry
    assert heap.root is not None
    set_state(heap.root, UNMARKED, tele)
    y = x
    while True:
        y = y.parent
        tele.iterations += 1
        dec_rank_floor(y, tele)
        if y.state == MARKED:
            if not _TEST_SKIP_UNMARK:
                set_state(y, UNMARKED, tele)
        else:
            set_state(y, MARKED, tele)
            break


def _dk_simple(heap: Heap, x: Node) -> None:
    if x is heap.root:
        return
    _toggle_walk(heap, x)
    _cut_and_reroot(heap, x)


def _dk_heap_order(heap: Heap, x: Node) -> None:
    """Like the plain policy, but only acts when heap order actually broke.

    The guard comparison is paid even when x is the root (a root is its own
    parent, so the guard is trivially false there).
    """
    tele = heap.universe.telemetry
    tele.comparisons += 1
    if not x.key < x.parent.key:
        return
    _toggle_walk(heap, x)
    _cut_and_reroot(heap, x)


def _dk_increasing_rank(heap: Heap, x: Node) -> None:
    # The walk only runs when the cut actually removes a rank contribution;
    # it climbs while ranks keep increasing, flipping states as it goes.
    if x is heap.root:
        return
    tele = heap.universe.telemetry
    if x.rank < x.parent.rank:
        assert heap.root is not None
        set_state(heap.root, UNMARKED, tele)
        y = x
        while True:
            y = y.parent
            tele.iterations += 1
            if y.state == MARKED:
                set_state(y, UNMARKED, tele)
            else:
                set_state(y, MARKED, tele)
            k = y.rank
            dec_rank_floor(y, tele)
            if y.state == MARKED:
                break
            if k >= y.parent.rank:
                break
    _cut_and_reroot(heap, x)


def _dk_passive_child(heap: Heap, x: Node) -> None:
    """Three-state variant: passive children do not count toward ranks.

    Cutting a passive child is free.  Cutting a counted child demotes the
    marked ancestors above it to passive (decrementing each, since their own
    parents stop counting them) until a node that can absorb the loss is
    found; that node is decremented and, if it was unmarked, marked.
    """
    if x is heap.root:
        return
    tele = heap.universe.telemetry
    assert heap.root is not None
    set_state(heap.root, PASSIVE, tele)
    if x.state != PASSIVE:
        y = x.parent
        while y.state == MARKED:
            set_state(y, PASSIVE, tele)
            dec_rank_floor(y, tele)
            y = y.parent
            tele.iterations += 1
        tele.iterations += 1
        dec_rank_floor(y, tele)
        if y.state == UNMARKED:
            set_state(y, MARKED, tele)
    _cut_and_reroot(heap, x)


def _dk_eager(heap: Heap, x: Node) -> None:
    # Fairly linked children are born marked; the mark means "my parent's
    # rank still counts me".  The walk settles all outstanding marks on the
    # path before the cut, so no lazy debt is left behind.
    if x is heap.root:
        return
    tele = heap.universe.telemetry
    assert heap.root is not None
    set_state(heap.root, UNMARKED, tele)
    y = x
    while y.state == MARKED:
        tele.iterations += 1
        set_state(y, UNMARKED, tele)
        y = y.parent
        dec_rank_floor(y, tele)
    _cut_and_reroot(heap, x)


def _dk_naive_increasing(heap: Heap, x: Node) -> None:
    if x is heap.root:
        return
    tele = heap.universe.telemetry
    if x.rank < x.parent.rank:
        y = x
        while True:
            y = y.parent
            tele.iterations += 1
            k = y.rank
            dec_rank_floor(y, tele)
            if y is heap.root:
                break
            if k >= y.parent.rank:
                break
    _cut_and_reroot(heap, x)


def _dk_zero_rank(heap: Heap, x: Node) -> None:
    if x is heap.root:
        return
    tele = heap.universe.telemetry
    if x.parent.rank > 0:
        y = x
        while True:
            y = y.parent
            tele.iterations += 1
            dec_rank_floor(y, tele)
            if y is heap.root:
                break
            if y.parent.rank == 0:
                break
    _cut_and_reroot(heap, x)


def _dk_randomized(heap: Heap, x: Node) -> None:
    """Decrement up the path, stopping at the root or on a coin flip.

    The walk starts at the decreased node itself (set
    ``heap.randomized_start_at_parent`` to start one level up instead).  No
    coin is spent once the root is reached.
    """
    if x is heap.root:
        return
    tele = heap.universe.telemetry
    y = x.parent if heap.randomized_start_at_parent else x
    if y is not heap.root:
        coin = heap.coin()
        while True:
            tele.iterations += 1
            dec_rank_floor(y, tele)
            y = y.parent
            if y is heap.root:
                break
            if coin.getrandbits(1):
                break
    _cut_and_reroot(heap, x)


def _dk_non_cascading(heap: Heap, x: Node) -> None:
    if x is heap.root:
        return
    dec_rank_floor(x.parent, heap.universe.telemetry)
    _cut_and_reroot(heap, x)


def _dk_classic(heap: Heap, x: Node) -> None:
    """Multi-root variant with cascading cuts.

    A root only refreshes the minimum pointer.  A non-root is cut when heap
    order broke; its parent is cut in turn if already marked, and so on,
    with the first unmarked non-root ancestor picking up a mark.  Nodes are
    unmarked as they enter the root list.  Cascaded roots have been in the
    heap all along, so only the decreased node can displace the minimum.
    """
    tele = heap.universe.telemetry
    if x.parent is x:
        assert heap.min_node is not None
        if x is heap.min_node:
            return
        tele.comparisons += 1
        if x.key < heap.min_node.key:
            heap.min_node = x
        return
    tele.comparisons += 1
    if not x.key < x.parent.key:
        return
    parent = x.parent
    heap._cut(x)
    tele.iterations += 1
    dec_rank_floor(parent, tele)
    set_state(x, UNMARKED, tele)
    heap.roots.append(x)
    assert heap.min_node is not None
    tele.comparisons += 1
    if x.key < heap.min_node.key:
        heap.min_node = x
    y = parent
    while y.parent is not y and y.state == MARKED:
        above = y.parent
        heap._cut(y)
        tele.iterations += 1
        dec_rank_floor(above, tele)
        set_state(y, UNMARKED, tele)
        heap.roots.append(y)
        y = above
    if y.parent is not y:
        set_state(y, MARKED, tele)


POLICY_DECREASE: dict[Policy, Callable[[Heap, Node], None]] = {
    Policy.SIMPLE: _dk_simple,
    Policy.HEAP_ORDER: _dk_heap_order,
    Policy.INCREASING_RANK: _dk_increasing_rank,
    Policy.PASSIVE_CHILD: _dk_passive_child,
    Policy.EAGER_MARKING: _dk_eager,
    Policy.NAIVE_INCREASING_RANK: _dk_naive_increasing,
    Policy.ZERO_RANK: _dk_zero_rank,
    Policy.RANDOMIZED: _dk_randomized,
    Policy.NON_CASCADING: _dk_non_cascading,
    Policy.CLASSIC: _dk_classic,
}
