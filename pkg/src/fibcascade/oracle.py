"""Reference semantics, trace files, and differential replay.

A trace is a list of operations over named heaps and named items, written one
per line::

    newheap h0 simple
    item x0 42
    insert h0 x0
    insert h0 x1 17        # shorthand: declares x1 with key 17, then inserts
    decreasekey x0 5
    findmin h0
    deletemin h0
    meld h0 h1
    delete x1

``#`` starts a comment; keys are signed decimal integers; heap and item names
are single-use tokens (a melded-away heap name is never reused).

:func:`replay_differential` runs a trace on a policy heap and on the sorted
reference in lockstep and reports the first divergence.  Equality is on keys:
tie-breaking among equal keys is the policies' prerogative, so after checking
the removed key the reference drops the very item the policy dropped, keeping
both sides aligned.  Strict mode additionally compares item identities, which
is only sound when all keys are unique.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from random import Random
from typing import Any, Callable, Iterable

from .core import POLICY_TAGS, Heap, HeapError, Node, Policy, Universe
from .instrumentation import (
    CheckReport,
    active_children_violations,
    potential_violations,
    rank_bound_violations,
    structure_violations,
)

Op = tuple  # one parsed trace line: (verb, arg, ...)


class TraceError(ValueError):
    """A trace could not be parsed or fails its preconditions."""


# ---------------------------------------------------------------------------
# reference heap


class OracleHeap:
    """Sorted-multiset semantics via a lazy-deletion binary heap.

    Keeps (key, uid) pairs; the minimum is the lexicographically least live
    pair.  Decreases push a fresh pair and stale ones are skipped on the way
    out, so every operation is O(log n) against entries ever pushed.
    """

    def __init__(self) -> None:
        self._entries: list[tuple[Any, int]] = []
        self._key: dict[int, Any] = {}

    def __len__(self) -> int:
        return len(self._key)

    def insert(self, uid: int, key: Any) -> None:
        if uid in self._key:
            raise TraceError(f"oracle: duplicate insert of item {uid}")
        self._key[uid] = key
        heapq.heappush(self._entries, (key, uid))

    def decrease_key(self, uid: int, key: Any) -> None:
        old = self._key[uid]
        if key > old:
            raise TraceError(f"oracle: key increase {old!r} -> {key!r}")
        self._key[uid] = key
        heapq.heappush(self._entries, (key, uid))

    def _settle(self) -> None:
        entries = self._entries
        while entries:
            key, uid = entries[0]
            if self._key.get(uid, _ABSENT) == key:
                return
            heapq.heappop(entries)

    def find_min(self) -> tuple[Any, int] | None:
        if not self._key:
            return None
        self._settle()
        return self._entries[0]

    def min_key(self) -> Any:
        pair = self.find_min()
        return None if pair is None else pair[0]

    def delete_min(self) -> tuple[Any, int]:
        pair = self.find_min()
        if pair is None:
            raise TraceError("oracle: delete-min on empty heap")
        del self._key[pair[1]]
        heapq.heappop(self._entries)
        return pair

    def remove(self, uid: int) -> None:
        """Drop a specific item (the policy heap chose it among equal keys,
        or a delete targeted it directly)."""
        del self._key[uid]

    def meld(self, other: "OracleHeap") -> None:
        if len(other._entries) > len(self._entries):
            self._entries, other._entries = other._entries, self._entries
        self._entries.extend(other._entries)
        heapq.heapify(self._entries)
        self._key.update(other._key)
        other._entries = []
        other._key = {}


class _Absent:
    __slots__ = ()


_ABSENT = _Absent()


# ---------------------------------------------------------------------------
# trace text format

_VERBS = {
    "newheap": 2,
    "item": 2,
    "insert": 2,  # or 3 with an inline key
    "deletemin": 1,
    "decreasekey": 2,
    "delete": 1,
    "meld": 2,
    "findmin": 1,
}

_INT_FIELDS = {("item", 2), ("decreasekey", 2), ("insert", 3)}


def parse_trace(text: str) -> list[Op]:
    """Parse trace text to a list of op tuples; errors carry line numbers."""
    ops: list[Op] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        verb = parts[0]
        if verb not in _VERBS:
            raise TraceError(f"line {lineno}: unknown verb {verb!r}")
        argc = len(parts) - 1
        want = _VERBS[verb]
        if argc != want and not (verb == "insert" and argc == 3):
            raise TraceError(
                f"line {lineno}: {verb} takes {want} arguments, got {argc}"
            )
        op: list[Any] = [verb]
        for pos, tok in enumerate(parts[1:], start=1):
            if (verb, pos) in _INT_FIELDS:
                try:
                    op.append(int(tok))
                except ValueError:
                    raise TraceError(
                        f"line {lineno}: {verb} argument {pos} must be an"
                        f" integer, got {tok!r}"
                    ) from None
            else:
                op.append(tok)
        if verb == "newheap" and op[2] not in POLICY_TAGS:
            raise TraceError(f"line {lineno}: unknown policy {op[2]!r}")
        ops.append(tuple(op))
    return ops


def format_trace(ops: Iterable[Op]) -> str:
    return "".join(" ".join(str(part) for part in op) + "\n" for op in ops)


def validate_trace(ops: Iterable[Op]) -> list[str]:
    """Precondition check, conservative across every tie-breaking choice.

    When a delete-min hits a tied minimum key, which item actually left
    depends on the policy; from then on the items of that heap have uncertain
    membership, so the checker refuses later operations that must name one of
    them.  Traces with unique keys (everything the generator emits) are never
    affected.
    """
    problems: list[str] = []
    heap_pol: dict[str, str] = {}
    dead_heaps: set[str] = set()
    hazy: set[str] = set()
    sizes: dict[str, int] = {}
    keys: dict[str, list] = {}  # heap -> min-heap of certain keys
    item_key: dict[str, Any] = {}
    item_where: dict[str, str | None] = {}  # live items only
    gone: set[str] = set()  # removed or uncertain

    def need_heap(i: int, h: str) -> bool:
        if h in heap_pol and h not in dead_heaps:
            return True
        problems.append(f"op {i}: no live heap named {h!r}")
        return False

    def need_item(i: int, x: str) -> bool:
        if x in item_where and item_where[x] is not None and x not in gone:
            return True
        if x in gone:
            problems.append(f"op {i}: item {x!r} may no longer be in a heap")
        elif x not in item_key:
            problems.append(f"op {i}: unknown item {x!r}")
        else:
            problems.append(f"op {i}: item {x!r} is not in a heap")
        return False

    def declare(i: int, x: str, key: Any) -> bool:
        if x in item_key:
            problems.append(f"op {i}: item name {x!r} reused")
            return False
        item_key[x] = key
        item_where[x] = None
        return True

    def put(i: int, h: str, x: str) -> None:
        item_where[x] = h
        sizes[h] += 1
        if h in hazy:
            gone.add(x)  # uncertain company: never target it again
        else:
            heapq.heappush(keys[h], item_key[x])

    for i, op in enumerate(ops):
        verb = op[0]
        if verb == "newheap":
            _, h, pol = op
            if h in heap_pol:
                problems.append(f"op {i}: heap name {h!r} reused")
            else:
                heap_pol[h] = pol
                sizes[h] = 0
                keys[h] = []
        elif verb == "item":
            declare(i, op[1], op[2])
        elif verb == "insert":
            h, x = op[1], op[2]
            if len(op) == 4:
                if not declare(i, x, op[3]):
                    continue
            if not need_heap(i, h):
                continue
            if x not in item_key:
                problems.append(f"op {i}: unknown item {x!r}")
            elif x in gone or item_where[x] is not None:
                problems.append(f"op {i}: item {x!r} is not free to insert")
            else:
                put(i, h, x)
        elif verb == "deletemin":
            h = op[1]
            if not need_heap(i, h):
                continue
            if sizes[h] == 0:
                problems.append(f"op {i}: delete-min on empty heap {h!r}")
                continue
            sizes[h] -= 1
            if h in hazy:
                continue
            q = keys[h]
            least = heapq.heappop(q)
            if q and q[0] == least:
                # tied minimum: membership of this heap is now uncertain
                hazy.add(h)
                for x, where in item_where.items():
                    if where == h:
                        gone.add(x)
            else:
                for x, where in item_where.items():
                    if where == h and item_key[x] == least:
                        item_where[x] = None
                        gone.add(x)
                        break
        elif verb == "decreasekey":
            x, key = op[1], op[2]
            if not need_item(i, x):
                continue
            if key > item_key[x]:
                problems.append(
                    f"op {i}: decrease-key raises {x!r} from {item_key[x]}"
                    f" to {key}"
                )
                continue
            h = item_where[x]
            assert h is not None
            if h not in hazy:
                q = keys[h]
                q.remove(item_key[x])
                heapq.heapify(q)
                heapq.heappush(q, key)
            item_key[x] = key
        elif verb == "delete":
            x = op[1]
            if not need_item(i, x):
                continue
            h = item_where[x]
            assert h is not None
            sizes[h] -= 1
            if h not in hazy:
                q = keys[h]
                q.remove(item_key[x])
                heapq.heapify(q)
            item_where[x] = None
            gone.add(x)
        elif verb == "meld":
            h1, h2 = op[1], op[2]
            if not (need_heap(i, h1) and need_heap(i, h2)):
                continue
            if h1 == h2:
                problems.append(f"op {i}: meld of {h1!r} with itself")
                continue
            dead_heaps.add(h2)
            sizes[h1] += sizes.pop(h2)
            if h2 in hazy or h1 in hazy:
                hazy.add(h1)
                hazy.discard(h2)
                for x, where in item_where.items():
                    if where in (h1, h2):
                        gone.add(x)
                keys[h1] = []
            else:
                q = keys[h1]
                q.extend(keys.pop(h2))
                heapq.heapify(q)
            for x, where in item_where.items():
                if where == h2:
                    item_where[x] = h1
        elif verb == "findmin":
            need_heap(i, op[1])
    return problems


# ---------------------------------------------------------------------------
# random trace generation


@dataclass
class TraceProfile:
    """Knobs for :func:`gen_trace`; same profile + seed => same trace.

    ``weights`` steer the draw per step; infeasible draws (delete-min on
    empty, meld with one heap, ...) fall back to an insert.  ``n_ops`` counts
    heap operations — standalone ``item`` declarations are free.  Generated
    keys are globally unique so that the trace is valid under every
    tie-breaking choice a policy might make.
    """

    n_ops: int = 1000
    seed: int = 0
    policy: str = "simple"
    weights: dict[str, int] = field(
        default_factory=lambda: {
            "insert": 30,
            "deletemin": 15,
            "decreasekey": 30,
            "delete": 5,
            "findmin": 10,
            "meld": 4,
            "newheap": 6,
        }
    )
    max_heaps: int = 4
    key_span: int = 1 << 40
    decrement_span: int = 1 << 20

    def validate(self) -> None:
        if self.n_ops < 0:
            raise TraceError("n_ops must be nonnegative")
        if any(w < 0 for w in self.weights.values()):
            raise TraceError("negative operation weight")
        if self.weights.get("insert", 0) <= 0:
            raise TraceError("profile needs a positive insert weight")


class _ModelHeap:
    """Generator-side bookkeeping for one heap: O(1) random member pick via
    a swap-remove list, O(log n) minimum via a lazy-deletion key heap."""

    __slots__ = ("key", "names", "pos", "pq")

    def __init__(self) -> None:
        self.key: dict[str, int] = {}
        self.names: list[str] = []
        self.pos: dict[str, int] = {}
        self.pq: list[tuple[int, str]] = []

    def __len__(self) -> int:
        return len(self.key)

    def add(self, x: str, key: int) -> None:
        self.key[x] = key
        self.pos[x] = len(self.names)
        self.names.append(x)
        heapq.heappush(self.pq, (key, x))

    def drop(self, x: str) -> None:
        del self.key[x]
        i = self.pos.pop(x)
        last = self.names.pop()
        if last != x:
            self.names[i] = last
            self.pos[last] = i

    def pick(self, rng: Random) -> str:
        return self.names[rng.randrange(len(self.names))]

    def min_name(self) -> str:
        while True:
            key, x = self.pq[0]
            if self.key.get(x) == key:
                return x
            heapq.heappop(self.pq)

    def reduce(self, x: str, key: int) -> None:
        self.key[x] = key
        heapq.heappush(self.pq, (key, x))

    def absorb(self, other: "_ModelHeap") -> None:
        for x, key in other.key.items():
            self.key[x] = key
            self.pos[x] = len(self.names)
            self.names.append(x)
        if len(other.pq) > len(self.pq):
            self.pq, other.pq = other.pq, self.pq
        self.pq.extend(other.pq)
        heapq.heapify(self.pq)


def gen_trace(profile: TraceProfile) -> list[Op]:
    """Generate a random, precondition-respecting trace."""
    profile.validate()
    rng = Random(profile.seed)
    verbs = sorted(k for k, w in profile.weights.items() if w > 0)
    weights = [profile.weights[v] for v in verbs]
    ops: list[Op] = [("newheap", "h0", profile.policy)]
    live_heaps = ["h0"]
    n_heaps = 1
    n_items = 0
    members: dict[str, _ModelHeap] = {"h0": _ModelHeap()}
    seen_keys: set[int] = set()
    budget = profile.n_ops - 1

    def fresh_key() -> int:
        while True:
            key = rng.randrange(-profile.key_span, profile.key_span)
            if key not in seen_keys:
                seen_keys.add(key)
                return key

    def emit_insert() -> None:
        nonlocal n_items
        h = live_heaps[rng.randrange(len(live_heaps))]
        x = f"x{n_items}"
        n_items += 1
        members[h].add(x, fresh_key())
        ops.append(("insert", h, x, members[h].key[x]))

    def some_loaded() -> str | None:
        loaded = [h for h in live_heaps if members[h]]
        if not loaded:
            return None
        return loaded[rng.randrange(len(loaded))]

    while budget > 0:
        budget -= 1
        verb = rng.choices(verbs, weights)[0]
        if verb == "insert":
            emit_insert()
        elif verb == "newheap":
            if n_heaps >= profile.max_heaps:
                emit_insert()
                continue
            h = f"h{n_heaps}"
            n_heaps += 1
            live_heaps.append(h)
            members[h] = _ModelHeap()
            ops.append(("newheap", h, profile.policy))
        elif verb == "deletemin":
            h = some_loaded()
            if h is None:
                emit_insert()
                continue
            members[h].drop(members[h].min_name())
            ops.append(("deletemin", h))
        elif verb == "decreasekey":
            h = some_loaded()
            if h is None:
                emit_insert()
                continue
            model = members[h]
            x = model.pick(rng)
            key = model.key[x] - 1 - rng.randrange(profile.decrement_span)
            while key in seen_keys:
                key -= 1
            seen_keys.add(key)
            model.reduce(x, key)
            ops.append(("decreasekey", x, key))
        elif verb == "delete":
            h = some_loaded()
            if h is None:
                emit_insert()
                continue
            x = members[h].pick(rng)
            members[h].drop(x)
            ops.append(("delete", x))
        elif verb == "meld":
            if len(live_heaps) < 2:
                emit_insert()
                continue
            h1, h2 = rng.sample(live_heaps, 2)
            live_heaps.remove(h2)
            members[h1].absorb(members.pop(h2))
            ops.append(("meld", h1, h2))
        elif verb == "findmin":
            ops.append(("findmin", live_heaps[rng.randrange(len(live_heaps))]))
    return ops


# ---------------------------------------------------------------------------
# differential replay


@dataclass
class ReplayVerdict:
    """Outcome of one lockstep run; ``ok`` means no divergence and no
    invariant-check failure."""

    policy: str
    steps: int = 0
    divergence: str | None = None
    step_index: int | None = None
    check_failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.divergence is None and not self.check_failures

    def as_dict(self) -> dict[str, Any]:
        return {
            "policy": self.policy,
            "ok": self.ok,
            "steps": self.steps,
            "divergence": self.divergence,
            "step_index": self.step_index,
            "check_failures": list(self.check_failures),
        }


def _quiet_min_key(heap: Heap) -> Any:
    if heap.policy is Policy.CLASSIC:
        node = heap.min_node
    else:
        node = heap.root
    return None if node is None else node.key


_ASSERTED_CHECKS: tuple[Callable[[Heap], CheckReport], ...] = (
    structure_violations,
    rank_bound_violations,
    potential_violations,
)


def run_checks(heap: Heap, include_active: bool = False) -> list[str]:
    """Asserted invariant checkers for one heap; failures as messages."""
    out: list[str] = []
    for checker in _ASSERTED_CHECKS:
        report = checker(heap)
        if report.asserted and not report.ok:
            tag = f"{heap.name}/{report.name}"
            out.extend(f"{tag}: {v}" for v in report.violations[:5])
    if include_active and heap.policy is Policy.SIMPLE:
        report = active_children_violations(
            heap, heap.universe.telemetry.active
        )
        if not report.ok:
            out.extend(
                f"{heap.name}/{report.name}: {v}"
                for v in report.violations[:5]
            )
    return out


def replay_differential(
    ops: Iterable[Op],
    policy: Policy | str | None = None,
    seed: int = 0,
    strict_identity: bool = False,
    check_interval: int = 0,
    record_sink: Callable | None = None,
) -> ReplayVerdict:
    """Run a trace against a policy heap and the reference in lockstep.

    ``policy`` overrides every ``newheap`` line's recorded policy, which is
    how one generated trace is replayed across all ten.  After each step the
    minimum keys of every live heap are compared (quietly — observation does
    not disturb the counters).  ``check_interval`` > 0 additionally runs the
    asserted invariant checkers every that-many steps and at the end.
    """
    if isinstance(policy, str):
        policy = Policy.from_tag(policy)
    tag = policy.value if policy is not None else "recorded"
    track_active = check_interval > 0
    universe = Universe(seed=seed, track_active=track_active)
    if record_sink is not None:
        universe.telemetry.record_sink = record_sink
    heaps: dict[str, Heap] = {}
    mirrors: dict[str, OracleHeap] = {}
    items: dict[str, Node] = {}
    verdict = ReplayVerdict(policy=tag)

    def diverged(i: int, msg: str) -> ReplayVerdict:
        verdict.divergence = msg
        verdict.step_index = i
        return verdict

    def agree(i: int, op: Op) -> bool:
        for name, heap in heaps.items():
            got = _quiet_min_key(heap)
            want = mirrors[name].min_key()
            if got != want:
                diverged(
                    i,
                    f"after {' '.join(map(str, op))}: heap {name} finds min"
                    f" {got!r}, reference finds {want!r}"
                    f" (sizes {len(heap)}/{len(mirrors[name])})",
                )
                return False
        return True

    i = -1
    try:
        for i, op in enumerate(ops):
            verb = op[0]
            if verb == "newheap":
                _, name, pol_tag = op
                if name in heaps:
                    raise TraceError(f"op {i}: heap name {name!r} reused")
                pol = policy if policy is not None else Policy.from_tag(pol_tag)
                heaps[name] = universe.make_heap(pol, name)
                mirrors[name] = OracleHeap()
            elif verb == "item":
                _, name, key = op
                if name in items:
                    raise TraceError(f"op {i}: item name {name!r} reused")
                items[name] = universe.make_item(key, info=name)
            elif verb == "insert":
                name = op[2]
                if len(op) == 4:
                    if name in items:
                        raise TraceError(f"op {i}: item name {name!r} reused")
                    items[name] = universe.make_item(op[3], info=name)
                node = items[name]
                heaps[op[1]].insert(node)
                mirrors[op[1]].insert(node.uid, node.key)
            elif verb == "deletemin":
                name = op[1]
                removed = heaps[name].delete_min()
                pair = mirrors[name].find_min()
                want = None if pair is None else pair[0]
                if removed.key != want:
                    return diverged(
                        i,
                        f"delete-min on {name} removed key {removed.key!r},"
                        f" reference minimum is {want!r}",
                    )
                if strict_identity and pair is not None and pair[1] != removed.uid:
                    return diverged(
                        i,
                        f"delete-min on {name} removed item {removed.uid},"
                        f" reference minimum is item {pair[1]}",
                    )
                mirrors[name].remove(removed.uid)
            elif verb == "decreasekey":
                node = items[op[1]]
                owner = _owner_of(heaps, node)
                if owner is None:
                    raise TraceError(
                        f"op {i}: item {op[1]!r} is in no live heap"
                    )
                owner.decrease_key(node, op[2])
                mirrors[owner.name].decrease_key(node.uid, op[2])
            elif verb == "delete":
                node = items[op[1]]
                owner = _owner_of(heaps, node)
                if owner is None:
                    raise TraceError(
                        f"op {i}: item {op[1]!r} is in no live heap"
                    )
                owner.delete(node)
                mirrors[owner.name].remove(node.uid)
            elif verb == "meld":
                h1, h2 = op[1], op[2]
                heaps[h1].meld(heaps[h2])
                mirrors[h1].meld(mirrors[h2])
                del heaps[h2], mirrors[h2]
            elif verb == "findmin":
                name = op[1]
                node = heaps[name].find_min()
                got = None if node is None else node.key
                want = mirrors[name].min_key()
                if got != want:
                    return diverged(
                        i,
                        f"find-min on {name} sees {got!r}, reference sees"
                        f" {want!r}",
                    )
            else:
                raise TraceError(f"op {i}: unknown verb {verb!r}")
            verdict.steps += 1
            if not agree(i, op):
                return verdict
            if check_interval and (i + 1) % check_interval == 0:
                for heap in heaps.values():
                    verdict.check_failures.extend(
                        run_checks(heap, include_active=True)
                    )
                if verdict.check_failures:
                    verdict.step_index = i
                    return verdict
    except HeapError as exc:
        raise TraceError(f"op {i}: precondition failed: {exc}") from exc
    except KeyError as exc:
        raise TraceError(f"op {i}: unknown heap or item name {exc}") from exc
    if check_interval:
        for heap in heaps.values():
            verdict.check_failures.extend(run_checks(heap, include_active=True))
        if verdict.check_failures:
            verdict.step_index = verdict.steps - 1
    return verdict


def _owner_of(heaps: dict[str, Heap], node: Node) -> Heap | None:
    """Which live heap contains this node (walk to its root)."""
    if not node.in_heap:
        return None
    top = node
    while top.parent is not top:
        top = top.parent
    for heap in heaps.values():
        if heap.policy is Policy.CLASSIC:
            if top in heap.roots:
                return heap
        elif heap.root is top:
            return heap
    return None
