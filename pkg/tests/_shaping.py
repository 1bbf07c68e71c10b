"""Hand-wiring helpers: build exact tree shapes without going through the
public operations, so tests can start from a known arrangement."""

from fibcascade import compute_potential
from fibcascade.instrumentation import iter_children


def wire(parent, *children):
    """Attach children in the given list order (first = parent.child)."""
    prev = None
    for c in children:
        c.parent = parent
        c.before = prev
        c.after = None
        if prev is None:
            parent.child = c
        else:
            prev.after = c
        prev = c


def adopt(universe, heap, nodes):
    """Register hand-wired nodes as the heap's contents and sync telemetry."""
    for n in nodes:
        n.in_heap = True
    heap._size = len(nodes)
    universe.telemetry.live_nodes = len(nodes)
    universe.telemetry.phi = compute_potential(heap.iter_roots())


def child_keys(node):
    return [c.key for c in iter_children(node)]


def counters_delta(universe, base):
    now = universe.telemetry.counters()
    return {k: now[k] - base[k] for k in base}


def assert_phi_consistent(universe, label=""):
    total = sum(
        compute_potential(h.iter_roots()) for h in universe.live_heaps()
    )
    assert total == universe.telemetry.phi, (
        f"{label}: tracked potential {universe.telemetry.phi} != recomputed {total}"
    )
