"""Storage / tensor / operator data model and the storage dependency graph.

Storages are the unit of memory the runtime manages; tensors are views onto
storages; operators are pure functions from input tensors to output tensors.
Identifiers are dense integers handed out in creation order, which is what
makes every tie-break in the simulator reproducible.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .errors import InvariantError, MalformedLogError


class _NegativeInfinity:
    """Last-access sentinel that orders below every timestamp.

    Used for released storages under ``banish-v2``. It is deliberately not a
    float so it can never leak into arithmetic.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __lt__(self, other):
        return other is not self

    def __le__(self, other):
        return True

    def __gt__(self, other):
        return False

    def __ge__(self, other):
        return other is self

    def __repr__(self):
        return "NEG_INF"

    def __reduce__(self):
        return (_NegativeInfinity, ())


NEG_INF = _NegativeInfinity()


class OutputSpec(NamedTuple):
    """Size and aliasing of one operator output.

    ``alias_of`` is the index into the operator's inputs whose storage the
    output views, or None when the operator allocates a fresh storage.
    """

    size: int
    alias_of: Optional[int] = None


@dataclass(eq=False)
class Storage:
    id: int
    size: int
    root: int
    views: list = field(default_factory=list)
    resident: bool = False
    locks: int = 0
    refs: int = 0
    pinned: bool = False
    component: Optional[int] = None
    cached_local_cost: int = 0

    @property
    def evictable(self):
        return self.resident and self.locks == 0 and not self.pinned


@dataclass(eq=False)
class Tensor:
    id: int
    op: int
    output_index: int
    storage: int
    is_alias: bool
    defined: bool = False
    refs: int = 0
    last_access: object = 0


@dataclass(eq=False)
class Operator:
    id: int
    name: str
    cost: int
    inputs: list
    outputs: list
    is_constant: bool = False
    # True once the operator has run at least once
    computed: bool = False


class DependencyGraph:
    """Tables of storages/tensors/operators plus deps and dependents edges.

    ``deps[s]`` holds the storages whose tensors feed some view of ``s``;
    ``dependents`` is its transpose. Both are kept so neighborhood scans cost
    O(degree) in either direction. Banished storages are deleted from
    ``storages`` and from both edge maps, but their tensors stay in
    ``tensors`` (ids are never reused).
    """

    def __init__(self):
        self.storages = {}
        self.tensors = []
        self.ops = []
        self.deps = {}
        self.dependents = {}
        self._next_storage = 0

    def __contains__(self, sid):
        return sid in self.storages

    def storage_of(self, tid):
        return self.tensors[tid].storage

    def size_of_tensor(self, tid):
        t = self.tensors[tid]
        if t.is_alias:
            return 0
        return self.storages[t.storage].size

    def add_operator_result(self, name, cost, inputs, outputs, constant=False):
        """Register an operator call and create its output tensors.

        ``outputs`` is a list of :class:`OutputSpec`. Fresh storages are
        created non-resident; the runtime decides residency. Returns the new
        :class:`Operator` whose ``outputs`` lists the new tensor ids.
        """
        for tid in inputs:
            if not 0 <= tid < len(self.tensors):
                raise MalformedLogError(f"unknown input tensor id {tid}")
            if self.tensors[tid].storage not in self.storages:
                raise MalformedLogError(
                    f"input tensor {tid} views a banished storage")
        if constant and (inputs or cost != 0):
            raise MalformedLogError("constants are nullary with cost 0")

        op = Operator(len(self.ops), name, cost, list(inputs), [], constant)
        self.ops.append(op)
        for index, spec in enumerate(outputs):
            tid = len(self.tensors)
            if spec.alias_of is None:
                sid = self._next_storage
                self._next_storage += 1
                self.storages[sid] = Storage(sid, spec.size, tid)
                self.deps[sid] = set()
                self.dependents[sid] = set()
                is_alias = False
            else:
                if not 0 <= spec.alias_of < len(inputs):
                    raise MalformedLogError(
                        f"alias_of index {spec.alias_of} out of range")
                sid = self.tensors[inputs[spec.alias_of]].storage
                is_alias = True
            storage = self.storages[sid]
            storage.views.append(tid)
            storage.cached_local_cost += cost
            self.tensors.append(Tensor(tid, op.id, index, sid, is_alias))
            op.outputs.append(tid)

            for in_tid in inputs:
                src = self.tensors[in_tid].storage
                if src != sid:
                    self.deps[sid].add(src)
                    self.dependents[src].add(sid)
        return op

    def remove_storage(self, sid):
        if sid not in self.storages:
            raise InvariantError(f"storage {sid} already removed")
        for dep in self.deps.pop(sid):
            self.dependents[dep].discard(sid)
        for child in self.dependents.pop(sid):
            self.deps[child].discard(sid)
        del self.storages[sid]

    def output_storages(self, op):
        """Distinct non-alias storages allocated by ``op`` (still present)."""
        seen = []
        for tid in op.outputs:
            t = self.tensors[tid]
            if not t.is_alias and t.storage in self.storages \
                    and t.storage not in seen:
                seen.append(t.storage)
        return seen
