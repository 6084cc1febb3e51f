"""Eviction heuristics. The runtime evicts the minimum-scoring storage.

Nearly every heuristic in the suite is an instance of one parameterized
score::

    cost_term / (size_term * staleness_term)

where each factor can be switched off (replaced by the constant 1) and the
cost term is one of

    estar      local cost + exact evicted-neighborhood cost
    eqclass    local cost + union-find component cost
    local      local cost only
    ancestors  local cost + cost of evicted ancestors (MSPS)
    off        1

Scores are exact rationals compared by cross-multiplication so ties are
decided by storage id, never by float rounding.
"""

from dataclasses import dataclass

from .errors import OutOfMemory
from .metadata import INF

COST_TERMS = ("estar", "eqclass", "local", "ancestors", "off")

# name -> (staleness, memory, cost)
_NAMED = {
    "dtr-full": (True, True, "estar"),
    "dtr-eqclass": (True, True, "eqclass"),
    "dtr-local": (True, True, "local"),
    "lru": (True, False, "off"),
    "largest": (False, True, "off"),
    "msps": (False, True, "ancestors"),
    "compute-memory": (False, True, "estar"),
    "dtr-full-minstale": (True, True, "estar"),
}

HEURISTIC_NAMES = tuple(_NAMED) + ("random",)

_ABLATION_COST = {"estar": "estar", "eqclass": "eqclass",
                  "local": "local", "off": "off"}


@dataclass(frozen=True)
class HeuristicSpec:
    name: str
    staleness: bool = True
    memory: bool = True
    cost: str = "estar"
    # staleness taken as the minimum over the neighborhood and the storage
    min_staleness: bool = False
    random: bool = False
    rng_seed: int = 0

    @classmethod
    def parse(cls, text, seed=0):
        """Build a spec from its CLI name.

        >>> HeuristicSpec.parse("ablation:s=on,m=off,c=local").cost
        'local'
        """
        text = text.strip()
        if text == "random":
            return cls("random", False, False, "off", random=True,
                       rng_seed=seed)
        if text in _NAMED:
            s, m, c = _NAMED[text]
            return cls(text, s, m, c,
                       min_staleness=text == "dtr-full-minstale")
        if text.startswith("ablation:"):
            fields = {}
            for part in text[len("ablation:"):].split(","):
                key, _, value = part.partition("=")
                fields[key.strip()] = value.strip()
            try:
                s, m, c = fields.pop("s"), fields.pop("m"), fields.pop("c")
            except KeyError as exc:
                raise ValueError(f"ablation needs s, m and c: {text!r}") \
                    from exc
            if fields or s not in ("on", "off") or m not in ("on", "off") \
                    or c not in _ABLATION_COST:
                raise ValueError(f"bad ablation spec {text!r}")
            return cls(f"ablation:s={s},m={m},c={c}", s == "on", m == "on",
                       _ABLATION_COST[c])
        raise ValueError(f"unknown heuristic {text!r}")

    @property
    def needs_exact(self):
        return self.cost in ("estar", "ancestors")

    @property
    def needs_union_find(self):
        return self.cost == "eqclass"

    def factors(self):
        """Scoring switches, for comparing specs by behavior."""
        return (self.staleness, self.memory, self.cost, self.min_staleness,
                self.random)


class Score:
    """Nonnegative extended rational ``num/den`` (den == 0 means +inf)
    ordered by value, then by storage id."""

    __slots__ = ("num", "den", "sid")

    def __init__(self, num, den, sid):
        self.num = num
        self.den = den
        self.sid = sid

    @property
    def value(self):
        if self.den == 0:
            return INF
        return self.num / self.den

    def _cmp(self, other):
        if self.den == 0 or other.den == 0:
            if self.den == other.den:
                return 0
            return 1 if self.den == 0 else -1
        lhs, rhs = self.num * other.den, other.num * self.den
        return (lhs > rhs) - (lhs < rhs)

    def __lt__(self, other):
        c = self._cmp(other)
        return c < 0 or (c == 0 and self.sid < other.sid)

    def __eq__(self, other):
        return self._cmp(other) == 0 and self.sid == other.sid

    def same_value(self, other):
        return self._cmp(other) == 0

    def __repr__(self):
        return f"Score({self.num}/{self.den}, sid={self.sid})"


def score(h, sid, now, meta, rng=None):
    """Score storage ``sid`` under heuristic ``h`` at clock ``now``.

    Every evaluation counts as one storage access; neighborhood lookups add
    whatever the metadata trackers visit.
    """
    meta.accesses += 1
    if h.random:
        return Score(rng.getrandbits(53), 1 << 53, sid)

    storage = meta.graph.storages[sid]
    if h.cost == "off":
        num = 1
    elif h.cost == "local":
        num = storage.cached_local_cost
    elif h.cost == "estar":
        num = storage.cached_local_cost + meta.neighborhood_cost(sid)
    elif h.cost == "eqclass":
        num = storage.cached_local_cost + meta.approx_neighborhood_cost(sid)
    else:
        num = storage.cached_local_cost + meta.ancestor_cost(sid)

    den = storage.size if h.memory else 1
    if h.staleness:
        if h.min_staleness:
            stale = _neighborhood_staleness(sid, now, meta)
        else:
            stale = meta.staleness(sid, now)
        if stale == INF:
            return Score(0, 1, sid)
        den *= stale
    return Score(num, den, sid)


def _neighborhood_staleness(sid, now, meta):
    stale = meta.staleness(sid, now)
    for other in meta.cached_neighborhood(sid):
        meta.accesses += 1
        stale = min(stale, meta.staleness(other, now))
    return stale


def argmin_evict_candidate(h, pool, now, meta, rng=None):
    """Pool member with the smallest score (ties: smallest storage id)."""
    if not pool:
        raise OutOfMemory("no evictable storage left")
    best = None
    # sorted so random draws are consumed in a reproducible order
    for sid in sorted(pool):
        s = score(h, sid, now, meta, rng)
        if best is None or s < best:
            best = s
    return best.sid
