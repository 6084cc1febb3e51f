"""Heuristic metadata over storages: cost, staleness and evicted neighborhoods.

Two neighborhood estimates are maintained:

* the exact evicted neighborhood, i.e. evicted ancestors reachable through
  evicted storages only, plus evicted descendants reachable the same way.
  Each resident storage caches the two halves separately and a half is only
  rebuilt after an eviction/rematerialization that can reach it;
* an undirected relaxation tracked with a union-find whose roots carry the
  summed local cost of their members. Rematerialization subtracts the
  storage's cost from its old set and moves it to a fresh empty set, so
  connections are never removed ("phantom" dependencies may remain).

``accesses`` counts storage visits made by metadata maintenance and queries;
the runtime reports it as storage-access telemetry.
"""

import math

from .errors import InvariantError
from .graph import NEG_INF

INF = math.inf


class CostUnionFind:
    """Union-find (path compression + union by size) with per-root cost sums.

    Nodes are plain integers; ``make_set`` always creates a new node, so a
    storage that is "moved to an empty set" simply gets a new node id.
    """

    def __init__(self):
        self.parent = []
        self.size = []
        self.cost = []
        self.steps = 0

    def make_set(self):
        node = len(self.parent)
        self.parent.append(node)
        self.size.append(1)
        self.cost.append(0)
        return node

    def find(self, x):
        root = x
        while True:
            self.steps += 1
            p = self.parent[root]
            if p == root:
                break
            root = p
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.cost[ra] += self.cost[rb]
        self.cost[rb] = 0
        return ra

    def roots(self):
        return {i for i, p in enumerate(self.parent) if p == i}


class Metadata:
    """Neighborhood bookkeeping for one replay.

    The owner flips ``Storage.resident`` and then calls :meth:`on_evict`,
    :meth:`on_rematerialize`; :meth:`on_new` for a freshly computed storage
    and :meth:`on_remove` right before a storage leaves the graph.
    ``exact`` / ``union_find`` switch the two trackers on; heuristics that
    need neither leave both off so they pay no maintenance.
    """

    def __init__(self, graph, exact=True, union_find=True):
        self.graph = graph
        self.exact = exact
        self.union_find = union_find
        self.uf = CostUnionFind()
        self.accesses = 0
        # sid -> (frozenset, cost) or None when dirty
        self._anc = {}
        self._desc = {}

    # -- local quantities -------------------------------------------------

    def local_cost(self, sid):
        return self.graph.storages[sid].cached_local_cost

    def last_access(self, sid):
        g = self.graph
        return max(g.tensors[t].last_access for t in g.storages[sid].views)

    def staleness(self, sid, now):
        """Clock units since the last access, clamped below at 1.

        Infinite when every view carries the NEG_INF sentinel.
        """
        last = self.last_access(sid)
        if last is NEG_INF:
            return INF
        return max(now - last, 1)

    # -- exact evicted neighborhood ----------------------------------------

    def _closure(self, sid, edges, count):
        storages = self.graph.storages
        seen = set()
        stack = [t for t in edges[sid]]
        while stack:
            t = stack.pop()
            if t in seen:
                continue
            if count:
                self.accesses += 1
            if storages[t].resident:
                continue
            seen.add(t)
            stack.extend(edges[t])
        return frozenset(seen)

    def evicted_ancestors_exact(self, sid):
        return self._closure(sid, self.graph.deps, False)

    def evicted_descendants_exact(self, sid):
        return self._closure(sid, self.graph.dependents, False)

    def evicted_neighborhood_exact(self, sid):
        """Fresh recomputation with no caching and no access accounting."""
        return (self.evicted_ancestors_exact(sid)
                | self.evicted_descendants_exact(sid))

    def _cost_sum(self, members):
        storages = self.graph.storages
        return sum(storages[t].cached_local_cost for t in members)

    def is_dirty(self, sid):
        return self._anc.get(sid) is None or self._desc.get(sid) is None

    def rebuild_cache(self, sid):
        """Recompute whichever cached halves of ``sid`` are dirty."""
        if self._anc.get(sid) is None:
            anc = self._closure(sid, self.graph.deps, True)
            self._anc[sid] = (anc, self._cost_sum(anc))
        if self._desc.get(sid) is None:
            desc = self._closure(sid, self.graph.dependents, True)
            self._desc[sid] = (desc, self._cost_sum(desc))

    def cached_ancestors(self, sid):
        if self._anc.get(sid) is None:
            self.rebuild_cache(sid)
        return self._anc[sid]

    def cached_descendants(self, sid):
        if self._desc.get(sid) is None:
            self.rebuild_cache(sid)
        return self._desc[sid]

    def cached_neighborhood(self, sid):
        return self.cached_ancestors(sid)[0] | self.cached_descendants(sid)[0]

    def neighborhood_cost(self, sid):
        """Sum of local costs over the exact evicted neighborhood (cached)."""
        anc, anc_cost = self.cached_ancestors(sid)
        desc, desc_cost = self.cached_descendants(sid)
        total = anc_cost + desc_cost
        # alias views can put a storage on both sides of a cycle
        if anc and desc and not anc.isdisjoint(desc):
            total -= self._cost_sum(anc & desc)
        return total

    def ancestor_cost(self, sid):
        return self.cached_ancestors(sid)[1]

    def _invalidate_around(self, sid):
        # Resident storages that reach ``sid`` through evicted storages only
        # see their descendant half change; symmetric for ancestors.
        g = self.graph
        for edges, halves in ((g.deps, self._desc), (g.dependents, self._anc)):
            seen = set()
            stack = list(edges[sid])
            while stack:
                t = stack.pop()
                if t in seen:
                    continue
                seen.add(t)
                self.accesses += 1
                if g.storages[t].resident:
                    if t in halves:
                        halves[t] = None
                else:
                    stack.extend(edges[t])

    # -- union-find relaxation ---------------------------------------------

    def uf_on_evict(self, sid):
        g = self.graph
        storage = g.storages[sid]
        steps = self.uf.steps
        root = self.uf.find(storage.component)
        for t in sorted(g.deps[sid] | g.dependents[sid]):
            other = g.storages[t]
            if not other.resident:
                root = self.uf.union(root, other.component)
        self.uf.cost[root] += storage.cached_local_cost
        self.accesses += self.uf.steps - steps

    def uf_on_rematerialize(self, sid):
        storage = self.graph.storages[sid]
        steps = self.uf.steps
        root = self.uf.find(storage.component)
        self.uf.cost[root] -= storage.cached_local_cost
        if self.uf.cost[root] < 0:
            raise InvariantError(
                f"negative component cost after splitting storage {sid}")
        storage.component = self.uf.make_set()
        self.accesses += self.uf.steps - steps

    def approx_neighborhood_cost(self, sid):
        """Summed cost of the distinct evicted components adjacent to ``sid``.

        Pure with respect to the union-find: finds may compress paths but
        never merge sets.
        """
        g = self.graph
        steps = self.uf.steps
        roots = set()
        for t in g.deps[sid] | g.dependents[sid]:
            other = g.storages[t]
            if not other.resident:
                roots.add(self.uf.find(other.component))
        self.accesses += self.uf.steps - steps
        return sum(self.uf.cost[r] for r in roots)

    def component_cost(self, sid):
        return self.uf.cost[self.uf.find(self.graph.storages[sid].component)]

    # -- lifecycle hooks ----------------------------------------------------

    def on_new(self, sid):
        self.graph.storages[sid].component = self.uf.make_set()
        if self.exact:
            self._anc[sid] = None
            self._desc[sid] = None

    def on_evict(self, sid):
        if self.exact:
            self._anc.pop(sid, None)
            self._desc.pop(sid, None)
            self._invalidate_around(sid)
        if self.union_find:
            self.uf_on_evict(sid)

    def on_rematerialize(self, sid):
        if self.exact:
            self._anc[sid] = None
            self._desc[sid] = None
            self._invalidate_around(sid)
        if self.union_find:
            self.uf_on_rematerialize(sid)

    def on_remove(self, sid):
        """Called while ``sid`` is still in the graph, just before removal."""
        storage = self.graph.storages[sid]
        if self.exact:
            self._anc.pop(sid, None)
            self._desc.pop(sid, None)
            if not storage.resident:
                self._invalidate_around(sid)
        if self.union_find and not storage.resident:
            root = self.uf.find(storage.component)
            self.uf.cost[root] -= storage.cached_local_cost
