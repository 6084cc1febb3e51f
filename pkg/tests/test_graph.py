import pickle

import pytest
from hypothesis import given, settings

from dtrsim.errors import InvariantError, MalformedLogError
from dtrsim.graph import NEG_INF, DependencyGraph, OutputSpec

from oracles import brute_neighborhood, build, graph_specs, path_spec, toggle


def _op(g, inputs, size=1, cost=1, alias=None):
    outs = [OutputSpec(size)] if alias is None else [OutputSpec(0, alias)]
    return g.add_operator_result("f", cost, inputs, outs).outputs[0]


def test_binary_op_creates_storage_with_both_deps():
    g = DependencyGraph()
    a, b = _op(g, []), _op(g, [])
    c = _op(g, [a, b])
    sc = g.storage_of(c)
    assert g.deps[sc] == {g.storage_of(a), g.storage_of(b)}
    assert sc == 2


def test_alias_shares_storage_and_adds_no_edge():
    g = DependencyGraph()
    a = _op(g, [], size=4)
    v = _op(g, [a], alias=0)
    sa = g.storage_of(a)
    assert g.storage_of(v) == sa
    assert g.storages[sa].views == [a, v]
    assert g.deps[sa] == set() and g.dependents[sa] == set()
    assert g.tensors[v].is_alias and g.size_of_tensor(v) == 0
    assert g.size_of_tensor(a) == 4


def test_chain_dependents():
    g = DependencyGraph()
    t1 = _op(g, [])
    t2 = _op(g, [t1])
    _op(g, [t2])
    assert g.dependents == {0: {1}, 1: {2}, 2: set()}


def test_remove_middle_of_chain():
    g = DependencyGraph()
    t1 = _op(g, [])
    t2 = _op(g, [t1])
    _op(g, [t2])
    g.remove_storage(1)
    assert g.deps[2] == set() and g.dependents[0] == set()
    assert 1 not in g


def test_remove_leaf_only_drops_incoming_edges():
    g = DependencyGraph()
    t1 = _op(g, [])
    _op(g, [t1])
    g.remove_storage(1)
    assert g.dependents[0] == set() and g.deps[0] == set()


def test_double_remove_is_an_invariant_error():
    g = DependencyGraph()
    _op(g, [])
    g.remove_storage(0)
    with pytest.raises(InvariantError):
        g.remove_storage(0)


def test_unknown_or_banished_input_is_malformed():
    g = DependencyGraph()
    with pytest.raises(MalformedLogError):
        _op(g, [3])
    a = _op(g, [])
    g.remove_storage(g.storage_of(a))
    with pytest.raises(MalformedLogError):
        _op(g, [a])


def test_constants_are_nullary_and_free():
    g = DependencyGraph()
    g.add_operator_result("c", 0, [], [OutputSpec(2)], constant=True)
    with pytest.raises(MalformedLogError):
        g.add_operator_result("c", 1, [], [OutputSpec(2)], constant=True)


def test_multi_output_op_lists_distinct_storages():
    g = DependencyGraph()
    a = _op(g, [])
    op = g.add_operator_result("f", 2, [a], [OutputSpec(1), OutputSpec(3),
                                             OutputSpec(0, alias_of=0)])
    assert g.output_storages(op) == [1, 2]


@settings(max_examples=200, deadline=None)
@given(graph_specs())
def test_structural_invariants(spec):
    g, _ = build(spec)
    for sid, s in g.storages.items():
        assert sid not in g.deps[sid]
        for d in g.deps[sid]:
            assert sid in g.dependents[d]
        for d in g.dependents[sid]:
            assert sid in g.deps[d]
        non_alias = [v for v in s.views if not g.tensors[v].is_alias]
        assert non_alias == [s.root]
        assert s.cached_local_cost == sum(
            g.ops[g.tensors[v].op].cost for v in s.views)


@settings(max_examples=200, deadline=None)
@given(graph_specs(aliases=False))
def test_creation_order_is_topological_without_aliases(spec):
    g, _ = build(spec)
    for sid in g.storages:
        assert all(d < sid for d in g.deps[sid])


def test_removed_storage_never_enters_a_neighborhood():
    g, meta = build(path_spec(5, [1] * 5, [1] * 5))
    for sid in (1, 2, 3):
        toggle(g, meta, sid)
    assert meta.cached_neighborhood(0) == {1, 2, 3}
    meta.on_remove(2)
    g.remove_storage(2)
    for sid in (0, 4):
        anc, desc = brute_neighborhood(g, sid)
        assert meta.cached_neighborhood(sid) == anc | desc
        assert 2 not in meta.cached_neighborhood(sid)
    assert meta.cached_neighborhood(0) == {1}


def test_neg_inf_sentinel_orders_below_everything_and_pickles():
    assert NEG_INF < -10 ** 18 and not NEG_INF > 0
    assert max(NEG_INF, 3) == 3
    assert pickle.loads(pickle.dumps(NEG_INF)) is NEG_INF
