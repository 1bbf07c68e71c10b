"""Mergeable heaps built from a single heap-ordered tree.

The data structure keeps one tree per heap (the classic multi-root variant is
the exception, see :data:`Policy.CLASSIC`).  Roots are combined by *naive*
links that ignore ranks; delete-min combines roots of equal rank with *fair*
links that bump the winner's rank, which is the only place ranks grow.  What
happens to ranks when a node loses a child is the pluggable part: each
:class:`Policy` names one rank-maintenance rule, implemented in
:mod:`fibcascade.policies`.

Ties: ``link(x, y)`` compares with a strict ``x.key > y.key``, so the first
argument wins ties everywhere (inserted singletons beat equal-keyed roots,
the consolidation accumulator beats equal-keyed registry occupants, and so
on).  This makes every run bit-for-bit deterministic.
"""

from __future__ import annotations

import random
import zlib
from enum import Enum
from typing import Any, Iterator

from .instrumentation import Telemetry

UNMARKED = 0
MARKED = 1
PASSIVE = 2

STATE_NAMES = {UNMARKED: "unmarked", MARKED: "marked", PASSIVE: "passive"}


class Policy(Enum):
    """Rank-maintenance rule applied when decrease-key detaches a subtree."""

    SIMPLE = "simple"
    HEAP_ORDER = "heap-order"
    INCREASING_RANK = "increasing-rank"
    PASSIVE_CHILD = "passive-child"
    EAGER_MARKING = "eager"
    NAIVE_INCREASING_RANK = "naive-increasing"
    ZERO_RANK = "zero-rank"
    RANDOMIZED = "randomized"
    NON_CASCADING = "non-cascading"
    CLASSIC = "classic"

    @classmethod
    def from_tag(cls, tag: str) -> "Policy":
        try:
            return cls(tag)
        except ValueError:
            raise HeapError(f"unknown policy tag {tag!r}") from None


POLICY_TAGS = tuple(p.value for p in Policy)


class HeapError(Exception):
    """Usage violation on a heap operation."""


class PreconditionError(HeapError):
    """The operation's precondition does not hold in the current state
    (empty heap, removed item, consumed heap, ...)."""


class _Bottom:
    """Reserved key that compares below every other key.

    Used internally by :meth:`Heap.delete`; it is rejected as an item key and
    as a public decrease-key target.
    """

    __slots__ = ()

    def __lt__(self, other: Any) -> bool:
        return other is not BOTTOM

    def __gt__(self, other: Any) -> bool:
        return False

    def __le__(self, other: Any) -> bool:
        return True

    def __ge__(self, other: Any) -> bool:
        return other is BOTTOM

    def __repr__(self) -> str:
        return "BOTTOM"


BOTTOM = _Bottom()


class Node:
    """One heap item: key, payload, rank, state, and tree pointers.

    ``parent`` of a root is the root itself (the heap-order policy reads it;
    everyone else just never looks).  ``live`` turns False when the item is
    removed, making dangling use a detectable error.
    """

    __slots__ = (
        "key",
        "info",
        "rank",
        "state",
        "parent",
        "child",
        "before",
        "after",
        "uid",
        "live",
        "in_heap",
    )

    def __init__(self, key: Any, info: Any, uid: int) -> None:
        self.key = key
        self.info = info
        self.rank = 0
        self.state = UNMARKED
        self.parent = self
        self.child: Node | None = None
        self.before: Node | None = None
        self.after: Node | None = None
        self.uid = uid
        self.live = True
        self.in_heap = False

    def __repr__(self) -> str:
        return (
            f"<Node {self.uid} key={self.key!r} rank={self.rank}"
            f" {STATE_NAMES[self.state]}>"
        )


def _mix_seeds(a: int, b: int) -> int:
    """Deterministic combination of two coin seeds (used on meld)."""
    return (
        a * 0x9E3779B97F4A7C15 + b * 0xBF58476D1CE4E5B9 + 0x94D049BB133111EB
    ) % (1 << 63)


def _seed_for_name(base_seed: int, name: str) -> int:
    return _mix_seeds(base_seed, zlib.crc32(name.encode("utf-8")))


class Universe:
    """Shared context for a family of heaps.

    Holds the telemetry (counters and potential), the item id sequence, and
    the consolidation registry, which is reused across delete-mins and must
    be all-``None`` between operations.
    """

    def __init__(self, seed: int = 0, track_active: bool = False) -> None:
        self.seed = seed
        self.telemetry = Telemetry(track_active=track_active)
        self.registry: list[Node | None] = [None] * 8
        self._next_uid = 0
        self._heaps: list[Heap] = []

    def make_item(self, key: Any, info: Any = None) -> Node:
        if key is BOTTOM or isinstance(key, _Bottom):
            raise HeapError("the reserved bottom key cannot be used for items")
        node = Node(key, info, self._next_uid)
        self._next_uid += 1
        return node

    def make_heap(self, policy: Policy | str, name: str | None = None) -> "Heap":
        if isinstance(policy, str):
            policy = Policy.from_tag(policy)
        if name is None:
            name = f"h{len(self._heaps)}"
        heap = Heap(self, policy, name)
        self._heaps.append(heap)
        self.telemetry.op_begin("make-heap", 0)
        self.telemetry.op_end()
        return heap

    def live_heaps(self) -> list["Heap"]:
        return [h for h in self._heaps if h.live]

    def registry_is_clear(self) -> bool:
        return all(slot is None for slot in self.registry)


# ---------------------------------------------------------------------------
# state / rank helpers shared with the policy implementations


def set_state(node: Node, new_state: int, tele: Telemetry) -> None:
    """Transition a node's state, keeping counters, phi, and the activity
    ledger consistent.  Transitions into/out of the marked state move phi by
    +/-2; a child leaving the marked state also leaves the active set."""
    old = node.state
    if old == new_state:
        return
    if old == MARKED:
        tele.unmarkings += 1
        tele.phi -= 2
        if tele.track_active and node.parent is not node:
            tele.active[node] = False
    if new_state == MARKED:
        tele.markings += 1
        tele.phi += 2
    node.state = new_state


def dec_rank_floor(node: Node, tele: Telemetry) -> None:
    """Decrement a rank, clamping at zero; every clamped attempt is counted."""
    if node.rank > 0:
        node.rank -= 1
        tele.phi += 1
    else:
        tele.rank_clamps += 1


class Heap:
    """A mergeable heap bound to one policy and one universe.

    All mutating entry points funnel through telemetry record boundaries, so
    per-operation counter deltas and potential changes are always available.
    """

    __slots__ = (
        "universe",
        "policy",
        "name",
        "root",
        "roots",
        "min_node",
        "_size",
        "coin_seed",
        "_coin",
        "randomized_start_at_parent",
        "live",
    )

    def __init__(self, universe: Universe, policy: Policy, name: str) -> None:
        self.universe = universe
        self.policy = policy
        self.name = name
        self.root: Node | None = None
        self.roots: list[Node] = []  # classic only
        self.min_node: Node | None = None  # classic only
        self._size = 0
        self.coin_seed = _seed_for_name(universe.seed, name)
        self._coin: random.Random | None = None
        self.randomized_start_at_parent = False
        self.live = True

    # -- introspection ------------------------------------------------------

    def __len__(self) -> int:
        return self._size

    @property
    def is_empty(self) -> bool:
        return self._size == 0

    def iter_roots(self) -> Iterator[Node]:
        if self.policy is Policy.CLASSIC:
            yield from self.roots
        elif self.root is not None:
            yield self.root

    def coin(self) -> random.Random:
        if self._coin is None:
            self._coin = random.Random(self.coin_seed)
        return self._coin

    def _check_live(self) -> None:
        if not self.live:
            raise PreconditionError(f"heap {self.name!r} was consumed by a meld")

    # -- primitive mutations ------------------------------------------------

    def _link(self, x: Node, y: Node, fair: bool) -> Node:
        """Combine two roots; the smaller key wins, first argument on ties.

        A fair link bumps the winner's rank (phi -1 via the rank change; the
        loser's root bonus moves to the winner's new child slot, net zero).
        A naive link leaves all ranks alone and costs no potential at all.
        The loser's state is adjusted where the policy calls for it.
        """
        tele = self.universe.telemetry
        tele.comparisons += 1
        if x.key > y.key:
            winner, loser = y, x
        else:
            winner, loser = x, y
        # splice loser in as the first child of winner
        loser.parent = winner
        z = winner.child
        loser.before = None
        loser.after = z
        if z is not None:
            z.before = loser
        winner.child = loser
        pol = self.policy
        if fair:
            tele.fair_links += 1
            winner.rank += 1
            tele.phi -= 1
            if pol is Policy.EAGER_MARKING:
                set_state(loser, MARKED, tele)
            elif pol is Policy.PASSIVE_CHILD or pol is Policy.CLASSIC:
                set_state(loser, UNMARKED, tele)
            if tele.track_active:
                tele.active[loser] = True
        else:
            tele.naive_links += 1
            if pol is Policy.PASSIVE_CHILD:
                set_state(loser, PASSIVE, tele)
            elif pol is Policy.EAGER_MARKING:
                set_state(loser, UNMARKED, tele)
            if tele.track_active:
                tele.active[loser] = False
        return winner

    def _cut(self, x: Node) -> None:
        """Detach x from its parent; x becomes a root (phi net zero)."""
        tele = self.universe.telemetry
        tele.cuts += 1
        y = x.parent
        if y.child is x:
            y.child = x.after
        if x.before is not None:
            x.before.after = x.after
        if x.after is not None:
            x.after.before = x.before
        x.before = None
        x.after = None
        x.parent = x

    def _reroot_link(self, x: Node) -> None:
        """Naive-link a detached x against the current root (x wins ties)."""
        self.root = self._link(x, self.root, fair=False)

    def _destroy(self, node: Node) -> None:
        """Remove a childless root from the universe and settle its phi."""
        tele = self.universe.telemetry
        tele.phi += node.rank - 1 - (2 if node.state == MARKED else 0)
        tele.live_nodes -= 1
        if tele.track_active:
            tele.active.pop(node, None)
        node.live = False
        node.in_heap = False
        node.child = None
        node.before = None
        node.after = None
        node.parent = node

    # -- operations ---------------------------------------------------------

    def find_min(self) -> Node | None:
        self._check_live()
        tele = self.universe.telemetry
        tele.op_begin("find-min", self._size)
        out = self.min_node if self.policy is Policy.CLASSIC else self.root
        tele.op_end()
        return out

    def insert(self, x: Node) -> None:
        self._check_live()
        if not x.live:
            raise PreconditionError(f"item {x.uid} was already removed")
        if x.in_heap:
            raise PreconditionError(f"item {x.uid} is already in a heap")
        tele = self.universe.telemetry
        tele.op_begin("insert", self._size)
        x.in_heap = True
        tele.live_nodes += 1
        tele.phi += 1  # a fresh singleton root
        if self.policy is Policy.CLASSIC:
            self.roots.append(x)
            if self.min_node is None:
                self.min_node = x
            else:
                tele.comparisons += 1
                if x.key < self.min_node.key:
                    self.min_node = x
        elif self.root is None:
            self.root = x
        else:
            # inserted node is the first link argument, so it wins ties
            self.root = self._link(x, self.root, fair=False)
        self._size += 1
        tele.op_end()

    def meld(self, other: "Heap") -> "Heap":
        self._check_live()
        other._check_live()
        if other is self:
            raise HeapError("cannot meld a heap with itself")
        if other.universe is not self.universe:
            raise HeapError("cannot meld heaps from different universes")
        if other.policy is not self.policy:
            raise HeapError(
                f"cannot meld {self.policy.value} with {other.policy.value}"
            )
        tele = self.universe.telemetry
        tele.op_begin("meld", self._size + other._size)
        if self.policy is Policy.CLASSIC:
            self.roots.extend(other.roots)
            other.roots = []
            if self.min_node is None:
                self.min_node = other.min_node
            elif other.min_node is not None:
                tele.comparisons += 1
                if other.min_node.key < self.min_node.key:
                    self.min_node = other.min_node
            other.min_node = None
        else:
            if self.root is None:
                self.root = other.root
            elif other.root is not None:
                self.root = self._link(self.root, other.root, fair=False)
            other.root = None
        self._size += other._size
        other._size = 0
        other.live = False
        self.coin_seed = _mix_seeds(self.coin_seed, other.coin_seed)
        self._coin = None
        tele.op_end()
        return self

    def decrease_key(self, x: Node, new_key: Any) -> None:
        if new_key is BOTTOM or isinstance(new_key, _Bottom):
            raise HeapError("the reserved bottom key cannot be assigned directly")
        self._decrease_key(x, new_key)

    def _decrease_key(self, x: Node, new_key: Any) -> None:
        self._check_live()
        if not x.live:
            raise PreconditionError(f"item {x.uid} was already removed")
        if not x.in_heap:
            raise PreconditionError(f"item {x.uid} is not in a heap")
        if new_key > x.key:
            raise PreconditionError(
                f"decrease-key must not increase the key ({new_key!r} > {x.key!r})"
            )
        from .policies import POLICY_DECREASE

        tele = self.universe.telemetry
        tele.op_begin("decrease-key", self._size)
        x.key = new_key
        POLICY_DECREASE[self.policy](self, x)
        tele.op_end()

    def delete_min(self) -> Node:
        self._check_live()
        if self._size == 0:
            raise PreconditionError("delete-min on an empty heap")
        tele = self.universe.telemetry
        tele.op_begin("delete-min", self._size)
        if self.policy is Policy.CLASSIC:
            removed = self._classic_delete_min()
        else:
            removed = self._tree_delete_min()
        self._size -= 1
        tele.op_end()
        return removed

    def delete(self, x: Node) -> Node:
        """Remove item x: an internal decrease to the bottom key, then a
        delete-min; telemetry sees the two constituent operations."""
        self._check_live()
        if not x.live:
            raise PreconditionError(f"item {x.uid} was already removed")
        self._decrease_key(x, BOTTOM)
        removed = self.delete_min()
        if removed is not x:  # pragma: no cover - structural impossibility
            raise HeapError("delete removed a different item than requested")
        return removed

    # -- delete-min machinery ----------------------------------------------

    def _tree_delete_min(self) -> Node:
        """Detach the root's children, then one registry pass: equal-rank
        roots meet in fair links while scanning first-to-last, and a final
        sweep over ascending ranks naive-links the survivors together.

        The registry slot is cleared at the winner's pre-bump rank, and the
        scanned (or accumulated) node is always the first link argument.
        """
        h = self.root
        assert h is not None
        A = self.universe.registry
        x = h.child
        h.child = None
        max_rank = 0
        while x is not None:
            y = x
            x = x.after
            y.parent = y
            y.before = None
            y.after = None
            while True:
                r = y.rank
                if r >= len(A):
                    A.extend([None] * (r + 1 - len(A)))
                    self.universe.registry = A
                occupant = A[r]
                if occupant is None:
                    break
                A[r] = None
                y = self._link(y, occupant, fair=True)
            A[y.rank] = y
            if y.rank > max_rank:
                max_rank = y.rank
        root: Node | None = None
        for i in range(max_rank + 1):
            occupant = A[i]
            if occupant is not None:
                A[i] = None
                if root is None:
                    root = occupant
                else:
                    root = self._link(root, occupant, fair=False)
        self.root = root
        self._destroy(h)
        return h

    def _classic_delete_min(self) -> Node:
        tele = self.universe.telemetry
        m = self.min_node
        assert m is not None
        self.roots.remove(m)
        child = m.child
        m.child = None
        while child is not None:
            nxt = child.after
            child.parent = child
            child.before = None
            child.after = None
            set_state(child, UNMARKED, tele)  # roots are never marked
            self.roots.append(child)
            child = nxt
        self._consolidate_classic()
        self._destroy(m)
        return m

    def _consolidate_classic(self) -> None:
        """Fair links only, front-to-back over the root list; survivors are
        relisted in increasing rank order and the min reference is recomputed
        with counted comparisons."""
        tele = self.universe.telemetry
        A = self.universe.registry
        max_rank = 0
        for y in self.roots:
            while True:
                r = y.rank
                if r >= len(A):
                    A.extend([None] * (r + 1 - len(A)))
                    self.universe.registry = A
                occupant = A[r]
                if occupant is None:
                    break
                A[r] = None
                y = self._link(y, occupant, fair=True)
            A[y.rank] = y
            if y.rank > max_rank:
                max_rank = y.rank
        survivors: list[Node] = []
        for i in range(max_rank + 1):
            if A[i] is not None:
                survivors.append(A[i])  # type: ignore[arg-type]
                A[i] = None
        self.roots = survivors
        best: Node | None = None
        for y in survivors:
            if best is None:
                best = y
            else:
                tele.comparisons += 1
                if y.key < best.key:
                    best = y
        self.min_node = best
