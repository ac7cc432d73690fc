import pytest
from hypothesis import given
from hypothesis import strategies as st

from statewalk.errors import MissingSourceState
from statewalk.graph import KnowledgeGraph, StateNode, TransitionEdge, add_state, add_transition, leaves
from statewalk.reward import RewardReason, RewardScore

from _support import click, explored, fp


def test_add_root_to_empty():
    g = KnowledgeGraph()
    assert g.add_state(StateNode(fp("a")))
    assert len(g) == 1 and g.root == fp("a").digest


def test_add_twice_is_idempotent():
    g = KnowledgeGraph()
    g.add_state(StateNode(fp("a")))
    g2, inserted = add_state(g, StateNode(fp("a")))
    assert not inserted and len(g2) == 1
    assert g.node(fp("a")).visit_count == 2


def test_95_distinct_states():
    g = KnowledgeGraph()
    for i in range(95):
        g.add_state(StateNode(fp(f"s{i}")))
    assert len(g) == 95


def test_missing_source():
    g = KnowledgeGraph()
    g.add_state(StateNode(fp("a")))
    with pytest.raises(MissingSourceState):
        g.add_transition(TransitionEdge(fp("zz").digest, fp("a").digest, click("x")))


def test_duplicate_edge_collapses_keeping_max_attempts_and_latest_reward():
    g = KnowledgeGraph()
    g.add_state(StateNode(fp("a")))
    a, b = fp("a").digest, fp("b").digest
    r1 = RewardScore(1.0, RewardReason.NEW_STATE)
    r2 = RewardScore(0.25, RewardReason.NEW_EDGE_KNOWN_STATE)
    assert g.add_transition(TransitionEdge(a, b, click("x"), r1, attempts=3, first_failed=True))
    assert not g.add_transition(TransitionEdge(a, b, click("x"), r2, attempts=1))
    assert len(g.edges) == 1
    e = g.edges[0]
    assert e.attempts == 3 and e.reward == r2 and e.first_failed


def test_parallel_edges_with_different_actions_kept():
    g = KnowledgeGraph()
    g.add_state(StateNode(fp("a")))
    a, b = fp("a").digest, fp("b").digest
    g.add_transition(TransitionEdge(a, b, click("x")))
    g.add_transition(TransitionEdge(a, b, click("y")))
    assert len(g.edges) == 2 and g.distinct_pairs() == {(a, b)}


def test_self_loop_stored():
    g = KnowledgeGraph()
    g.add_state(StateNode(fp("a")))
    a = fp("a").digest
    g.add_transition(TransitionEdge(a, a, click("x")))
    assert len(g) == 1 and len(g.edges) == 1 and not g.is_leaf(a)


def test_attempts_must_be_positive():
    with pytest.raises(ValueError):
        TransitionEdge("a", "b", click("x"), attempts=0)


def test_leaves():
    g = KnowledgeGraph()
    g.add_state(StateNode(fp("a")))
    assert leaves(g) == [fp("a").digest]
    add_transition(g, TransitionEdge(fp("a").digest, fp("b").digest, click("1")))
    add_transition(g, TransitionEdge(fp("b").digest, fp("c").digest, click("2")))
    assert leaves(g) == [fp("c").digest]


def test_tree_path_uses_discovery_edges():
    g = KnowledgeGraph()
    g.add_state(StateNode(fp("a")))
    a, b, c = (fp(x).digest for x in "abc")
    g.add_transition(TransitionEdge(a, b, click("1")))
    g.add_transition(TransitionEdge(b, c, click("2")))
    g.add_transition(TransitionEdge(a, c, click("3")))  # later shortcut, not a discovery edge
    assert [e.action.key for e in g.tree_path(c)] == [click("1").key, click("2").key]
    assert g.tree_path(a) == []


def test_snapshot_is_independent():
    g = KnowledgeGraph()
    g.add_state(StateNode(fp("a")))
    snap = g.snapshot()
    g.add_transition(TransitionEdge(fp("a").digest, fp("b").digest, click("1")))
    assert len(snap) == 1 and len(g) == 2


def test_explored_shop_includes_thank_you_leaf():
    g, _ = explored("ecommerce")
    paths = {g.node(d).fingerprint.url_path for d in g.leaves()}
    assert "/thank-you" in paths


@given(st.lists(st.tuples(st.integers(0, 30), st.integers(0, 40)), max_size=80))
def test_reachability_and_monotone_counts(ops):
    g = KnowledgeGraph()
    g.add_state(StateNode(fp("n0")))
    ids = [fp("n0").digest]
    for k, (src, dst) in enumerate(ops):
        before = (len(g), len(g.edges))
        s = ids[src % len(ids)]
        t = fp(f"n{dst}").digest
        g.add_transition(TransitionEdge(s, t, click(f"a{k % 7}")))
        if t not in ids:
            ids.append(t)
        assert len(g) >= before[0] and len(g.edges) >= before[1]
        assert g.reachable_from_root() == set(g.node_ids())
