"""Brute-force reference implementations and random-graph strategies.

The oracles work on dense boolean adjacency matrices and compute closures by
repeated squaring, which shares no code or traversal order with the
incremental trackers under test.
"""

import numpy as np
from hypothesis import strategies as st

from dtrsim.graph import DependencyGraph, OutputSpec
from dtrsim.metadata import Metadata


@st.composite
def graph_specs(draw, max_ops=30, aliases=True, max_fanin=3):
    """List of (inputs, cost, size, alias) op descriptions.

    ``inputs`` index earlier ops (their first output), ``alias`` adds a
    second output viewing the first input's storage.
    """
    n = draw(st.integers(1, max_ops))
    spec = []
    for k in range(n):
        if k == 0:
            ins = []
        else:
            ins = draw(st.lists(st.integers(0, k - 1), max_size=max_fanin,
                                unique=True))
        cost = draw(st.integers(1, 9))
        size = draw(st.integers(1, 5))
        alias = aliases and bool(ins) and draw(st.booleans()) \
            and draw(st.booleans())
        spec.append((ins, cost, size, alias))
    return spec


def path_spec(n, costs, sizes):
    return [([k - 1] if k else [], costs[k], sizes[k], False)
            for k in range(n)]


def build(spec, exact=True, union_find=True):
    """Graph with every storage resident plus its metadata tracker."""
    g = DependencyGraph()
    meta = Metadata(g, exact=exact, union_find=union_find)
    first = []
    for ins, cost, size, alias in spec:
        outs = [OutputSpec(size)]
        if alias:
            outs.append(OutputSpec(0, alias_of=0))
        op = g.add_operator_result("op", cost, [first[i] for i in ins], outs)
        first.append(op.outputs[0])
        sid = g.tensors[op.outputs[0]].storage
        g.storages[sid].resident = True
        meta.on_new(sid)
    return g, meta


def toggle(g, meta, sid):
    """Evict a resident storage or bring an evicted one back."""
    s = g.storages[sid]
    if s.resident:
        s.resident = False
        meta.on_evict(sid)
    else:
        s.resident = True
        meta.on_rematerialize(sid)


def adjacency(g):
    ids = sorted(g.storages)
    index = {sid: i for i, sid in enumerate(ids)}
    a = np.zeros((len(ids), len(ids)), dtype=bool)
    for sid in ids:
        for d in g.deps[sid]:
            a[index[d], index[sid]] = True
    return ids, index, a


def _closure(m):
    reach = m.copy()
    while True:
        nxt = reach | ((reach.astype(np.int64) @ reach.astype(np.int64)) > 0)
        if (nxt == reach).all():
            return reach
        reach = nxt


def brute_neighborhood(g, sid):
    """(evicted ancestors, evicted descendants) of ``sid`` via closures.

    An ancestor T counts when a dependency path T -> ... -> sid exists whose
    every storage except ``sid`` is evicted.
    """
    ids, index, a = adjacency(g)
    ev = np.array([not g.storages[t].resident for t in ids])
    i = index[sid]
    # paths through evicted intermediates only: close over evicted subgraph
    inner = a & ev[:, None] & ev[None, :]
    reach = _closure(inner) | np.eye(len(ids), dtype=bool)
    into = a[:, i] & ev        # evicted direct deps of sid
    out = a[i, :] & ev         # evicted direct dependents of sid
    anc = (reach[:, into].any(axis=1)) & ev
    desc = (reach[out, :].any(axis=0)) & ev
    anc[i] = desc[i] = False
    return ({ids[k] for k in np.flatnonzero(anc)},
            {ids[k] for k in np.flatnonzero(desc)})


def brute_components(g):
    """Map evicted storage -> frozenset of its undirected evicted component."""
    ids, index, a = adjacency(g)
    ev = np.array([not g.storages[t].resident for t in ids])
    und = (a | a.T) & ev[:, None] & ev[None, :]
    reach = _closure(und | np.diag(ev))
    out = {}
    for k in np.flatnonzero(ev):
        out[ids[k]] = frozenset(ids[j] for j in np.flatnonzero(reach[k]))
    return out
