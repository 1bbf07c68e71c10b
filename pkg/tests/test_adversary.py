"""The worst-case schedule builder and its shape verifier."""

from __future__ import annotations

import math

import pytest

from fibcascade import Policy, Universe
from fibcascade.adversary import (
    AdversaryBuilder,
    ShapeError,
    build_ops_needed,
    max_k_within,
    replay_ops,
    run_lower_bound,
    steady_tree_size,
    verify_t_shape,
)
from fibcascade.instrumentation import log_phi


def test_shape_sizes():
    assert [steady_tree_size(k) for k in (1, 2, 3, 4, 10)] == [2, 4, 7, 11, 56]


def test_build_budgets():
    assert [build_ops_needed(k) for k in (1, 2, 3, 4, 5, 10)] == [
        2, 6, 14, 27, 46, 266,
    ]
    assert build_ops_needed(100) == 176651
    with pytest.raises(ValueError):
        build_ops_needed(0)


def test_max_k_within_matches_the_budget_table():
    assert max_k_within(10_000 / 3) == 25
    assert max_k_within(30_000 / 3) == 37
    assert max_k_within(100_000 / 3) == 56
    for k in (25, 37, 56):
        assert build_ops_needed(k) <= (k_budget := build_ops_needed(k + 1) - 1)
        assert max_k_within(k_budget) == k


@pytest.mark.parametrize("k", [1, 2, 3, 5, 8])
def test_build_verified_at_every_step(k):
    builder = AdversaryBuilder(seed=0)
    stats = builder.build(k, verify_each_step=True)
    assert stats.k == k
    assert stats.ops == build_ops_needed(k)
    assert builder.op_count == stats.ops
    assert len(builder.heap) == steady_tree_size(k)
    assert verify_t_shape(builder.heap, k) == []


def test_steady_round_counters_are_exact():
    builder = AdversaryBuilder(seed=0)
    builder.build(4)
    rounds = builder.run_rounds(3)
    for stats in rounds:
        assert stats.n_before == steady_tree_size(4) + 1
        assert stats.fair_links == 4
        assert stats.naive_links == 0
        assert stats.iterations == 0
        assert stats.comparisons == 4
        assert math.isclose(stats.est_time, 1 + log_phi(12) + 4)


def test_rounds_reproduce_the_shape_and_advance_the_root():
    builder = AdversaryBuilder(seed=0)
    builder.build(6)
    builder.start_rounds()
    roots = []
    for _ in range(10):
        builder.steady_round(verify=True)
        roots.append(builder.heap.root.key)
        assert verify_t_shape(builder.heap, 6) == []
    assert roots == sorted(roots) and len(set(roots)) == 10


def test_verifier_rejects_a_random_heap():
    u = Universe()
    h = u.make_heap(Policy.NON_CASCADING)
    for key in (5, 3, 8, 1, 9, 2):
        h.insert(u.make_item(key))
    h.delete_min()
    assert verify_t_shape(h, 3)


def test_verifier_names_the_broken_invariant():
    builder = AdversaryBuilder(seed=0)
    builder.build(4)
    victim = builder.heap.root.child  # some broom root
    victim.rank += 1
    problems = verify_t_shape(builder.heap, 4)
    assert any("child ranks" in p for p in problems)


def test_broken_round_raises_shape_error():
    builder = AdversaryBuilder(seed=0)
    builder.build(3)
    builder.start_rounds()
    # vandalize the shape: cut a leaf off a broom behind the builder's back
    broom = builder.heap.root.child
    while broom.child is None:
        broom = broom.after
    leaf = broom.child
    leaf.after.before = leaf.before
    if leaf.before is not None:
        leaf.before.after = leaf.after
    else:
        broom.child = leaf.after
    with pytest.raises(ShapeError):
        builder.steady_round(verify=True)


def test_recorded_trace_rebuilds_the_same_state():
    builder = AdversaryBuilder(seed=0, recording=True)
    builder.build(5)
    builder.run_rounds(4)
    universe, heaps = replay_ops(builder.trace)
    heap = heaps["h0"]
    assert heap.policy is Policy.NON_CASCADING
    assert verify_t_shape(heap, 5) == []
    assert len(heap) == len(builder.heap)
    assert heap.root.key == builder.heap.root.key
    ours = universe.telemetry.counters()
    theirs = builder.universe.telemetry.counters()
    assert ours == theirs


def test_replay_on_simple_takes_a_different_path():
    builder = AdversaryBuilder(seed=0, recording=True)
    builder.build(5)
    builder.run_rounds(4)
    universe, heaps = replay_ops(builder.trace, policy="simple")
    assert heaps["h0"].root.key == builder.heap.root.key  # same minimum...
    ours = universe.telemetry.counters()
    theirs = builder.universe.telemetry.counters()
    assert ours != theirs  # ...through different link work


def test_replay_on_op_callback_sees_every_step():
    builder = AdversaryBuilder(seed=0, recording=True)
    builder.build(3)
    seen = []
    replay_ops(builder.trace, on_op=lambda i, u, hs: seen.append(i))
    # one callback per trace line, the newheap declaration included
    assert seen == list(range(len(builder.trace)))
    assert len(builder.trace) == builder.op_count + 1


def test_lower_bound_schedule_invariants():
    result, builder = run_lower_bound(2000, seed=0)
    assert result.k == max_k_within(2000 / 3)
    assert result.build_ops == build_ops_needed(result.k)
    assert result.total_ops <= result.m
    assert result.total_ops == result.build_ops + 2 * result.rounds
    assert result.final_size == steady_tree_size(result.k)
    assert result.rounds_sample
    for stats in result.rounds_sample:
        assert stats.fair_links == result.k
        assert stats.naive_links == 0
    assert verify_t_shape(builder.heap, result.k) == []
    assert result.total_est_time > result.rounds * result.k


def test_lower_bound_rejects_tiny_budgets():
    with pytest.raises(ValueError):
        run_lower_bound(5)
