"""The rematerializing runtime: budgeted (re)computation, eviction and
deallocation handling, driven either instruction-by-instruction or by
:func:`run` over a whole :class:`~dtrsim.oplog.OpLog`.

Memory accounting is strict: the runtime frees *before* allocating, so
``memory <= budget`` holds at every instruction boundary. Rematerialization
uses an explicit stack of operator frames, never Python recursion.
"""

import random
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import oplog as _oplog
from .errors import (InvariantError, MalformedLogError, OutOfMemory,
                     ThrashAbort)
from .graph import NEG_INF, DependencyGraph, OutputSpec
from .heuristics import HeuristicSpec, argmin_evict_candidate
from .metadata import Metadata

POLICIES = ("ignore", "eager-evict", "banish", "banish-v2")

# residency codes used in traces
REMOVED, EVICTED, RESIDENT, PINNED = -1, 0, 1, 2
STATE_NAMES = {EVICTED: "evicted", RESIDENT: "resident", PINNED: "pinned"}

# the kill switch fires at this multiple of the thrash threshold
KILL_MULTIPLIER = 8


@dataclass
class Telemetry:
    total_compute: int = 0
    base_compute: int = 0
    rematerialization_count: int = 0
    eviction_count: int = 0
    banish_count: int = 0
    peak_memory: int = 0
    storage_accesses: int = 0
    pinned_bytes: int = 0

    @property
    def slowdown(self):
        if self.base_compute == 0:
            return 1.0
        return self.total_compute / self.base_compute


@dataclass
class SimOutcome:
    status: str
    telemetry: Telemetry
    budget: Optional[int] = None
    heuristic: str = ""
    policy: str = ""
    message: str = ""
    trace: Optional[list] = field(default=None, repr=False)

    def as_dict(self):
        d = asdict(self.telemetry)
        d["slowdown"] = self.telemetry.slowdown
        d.update(status=self.status, budget=self.budget,
                 heuristic=self.heuristic, policy=self.policy)
        return d


def _as_fraction(x):
    if isinstance(x, Fraction):
        return x
    return Fraction(str(x))


class Runtime:
    """One replay's complete mutable state.

    ``budget=None`` means unlimited memory. ``kill_compute`` aborts the
    replay with :class:`ThrashAbort` once total compute exceeds it.
    """

    def __init__(self, budget, heuristic, policy="eager-evict",
                 kill_compute=None):
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}")
        if isinstance(heuristic, str):
            heuristic = HeuristicSpec.parse(heuristic)
        self.budget = budget
        self.heuristic = heuristic
        self.policy = policy
        self.kill_compute = kill_compute
        self.graph = DependencyGraph()
        self.meta = Metadata(self.graph, exact=heuristic.needs_exact,
                             union_find=heuristic.needs_union_find)
        self.rng = random.Random(heuristic.rng_seed)
        self.clock = 0
        self.memory = 0
        self.pool = set()
        self.pending_banish = set()
        self.telemetry = Telemetry()

    # -- small queries -----------------------------------------------------

    def storage(self, tid):
        return self.graph.storages[self.graph.tensors[tid].storage]

    def storage_size(self, tid):
        return self.storage(tid).size

    def is_defined(self, tid):
        return self.graph.tensors[tid].defined

    def is_resident(self, tid):
        sid = self.graph.tensors[tid].storage
        return sid in self.graph.storages and \
            self.graph.storages[sid].resident

    # -- pool / lock / memory bookkeeping ------------------------------------

    def _refresh_pool(self, s):
        if s.resident and s.locks == 0 and not s.pinned \
                and s.id in self.graph.storages:
            self.pool.add(s.id)
        else:
            self.pool.discard(s.id)

    def _lock(self, storages):
        for s in storages:
            s.locks += 1
            self.pool.discard(s.id)

    def _unlock(self, storages):
        for s in storages:
            s.locks -= 1
            if s.locks < 0:
                raise InvariantError(f"storage {s.id} unlocked below zero")
            self._refresh_pool(s)

    def _allocate(self, s):
        s.resident = True
        self.memory += s.size
        if self.memory > self.telemetry.peak_memory:
            self.telemetry.peak_memory = self.memory

    def _reserve(self, needed):
        if self.budget is not None and self.memory + needed > self.budget:
            self.free(needed)

    def _charge(self, cost):
        self.clock += cost
        self.telemetry.total_compute += cost
        if self.kill_compute is not None \
                and self.telemetry.total_compute > self.kill_compute:
            raise ThrashAbort(
                f"total compute {self.telemetry.total_compute} exceeded "
                f"{self.kill_compute}")

    def _pin(self, s):
        if not s.pinned:
            s.pinned = True
            self.telemetry.pinned_bytes += s.size
        self.pool.discard(s.id)

    # -- eviction ----------------------------------------------------------

    def evict(self, sid):
        s = self.graph.storages[sid]
        if not s.evictable:
            raise InvariantError(f"storage {sid} is not evictable")
        s.resident = False
        for tid in s.views:
            self.graph.tensors[tid].defined = False
        self.memory -= s.size
        self.pool.discard(sid)
        self.meta.on_evict(sid)
        self.telemetry.eviction_count += 1

    def free(self, headroom):
        """Evict minimum-score storages until ``memory + headroom <= budget``.

        Raises :class:`OutOfMemory` when the pool runs dry first.
        """
        while self.memory + headroom > self.budget:
            sid = argmin_evict_candidate(self.heuristic, self.pool,
                                         self.clock, self.meta, self.rng)
            self.evict(sid)

    # -- (re)materialization -----------------------------------------------

    def _input_storages(self, op):
        g = self.graph
        out = []
        for tid in op.inputs:
            sid = g.tensors[tid].storage
            if sid not in g.storages:
                raise InvariantError(
                    f"operator {op.id} needs banished storage {sid}")
            out.append(g.storages[sid])
        return out

    def _recompute(self, op):
        """Replay an already-computed operator whose inputs are defined."""
        g = self.graph
        outs = [g.storages[sid] for sid in g.output_storages(op)]
        needed = sum(s.size for s in outs if not s.resident)
        # outputs still resident are overwritten in place, never evicted
        held = [s for s in outs if s.resident]
        self._lock(held)
        self._reserve(needed)
        for s in outs:
            if not s.resident:
                self._allocate(s)
                self.meta.on_rematerialize(s.id)
        for tid in op.outputs:
            t = g.tensors[tid]
            if t.storage in g.storages:
                t.defined = True
        self.telemetry.rematerialization_count += 1
        self._unlock(held)
        for s in outs:
            self._refresh_pool(s)
        self._charge(op.cost)

    def materialize(self, tid):
        """Make tensor ``tid`` defined, rematerializing ancestors as needed.

        Parent storages are locked for the duration of each replayed
        operator; undefined parents are handled depth first in argument
        order.
        """
        g = self.graph
        if g.tensors[tid].defined:
            return
        # frame: [op, locked storages or None, next input index]
        stack = [[g.ops[g.tensors[tid].op], None, 0]]
        while stack:
            frame = stack[-1]
            op = frame[0]
            if frame[1] is None:
                frame[1] = self._input_storages(op)
                self._lock(frame[1])
            inputs = op.inputs
            i = frame[2]
            while i < len(inputs) and g.tensors[inputs[i]].defined:
                i += 1
            frame[2] = i
            if i < len(inputs):
                parent = g.tensors[inputs[i]]
                if parent.storage not in g.storages:
                    raise InvariantError(
                        f"tensor {parent.id} views a banished storage")
                stack.append([g.ops[parent.op], None, 0])
                continue
            self._recompute(op)
            self._unlock(frame[1])
            self._retry_banish(frame[1])
            stack.pop()

    def call(self, name, cost, inputs, outputs):
        """Execute a logged operator for the first time.

        ``outputs`` is a list of :class:`~dtrsim.graph.OutputSpec`. Returns
        the new tensor ids, each holding one external reference.
        """
        g = self.graph
        now = self.clock
        for tid in inputs:
            if not 0 <= tid < len(g.tensors):
                raise MalformedLogError(f"unknown input tensor id {tid}")
            g.tensors[tid].last_access = now
        in_storages = [self.storage(tid) for tid in inputs]
        self._lock(in_storages)
        for tid in inputs:
            self.materialize(tid)
        needed = sum(spec.size for spec in outputs if spec.alias_of is None)
        self._reserve(needed)

        op = g.add_operator_result(name, cost, inputs, outputs)
        op.computed = True
        fresh = []
        for tid in op.outputs:
            t = g.tensors[tid]
            s = g.storages[t.storage]
            if not t.is_alias:
                self._allocate(s)
                self.meta.on_new(s.id)
                fresh.append(s)
            t.defined = True
            t.refs = 1
            s.refs += 1
            t.last_access = now
        self._unlock(in_storages)
        for s in fresh:
            self._refresh_pool(s)
        self._charge(cost)
        self._retry_banish(in_storages)
        return list(op.outputs)

    def constant(self, size, name="constant"):
        """Create a pinned, nullary, zero-cost constant holding one ref."""
        self._reserve(size)
        op = self.graph.add_operator_result(name, 0, [], [OutputSpec(size)],
                                            constant=True)
        op.computed = True
        tid = op.outputs[0]
        t = self.graph.tensors[tid]
        s = self.graph.storages[t.storage]
        self._allocate(s)
        self.meta.on_new(s.id)
        self._pin(s)
        t.defined = True
        t.refs = 1
        s.refs = 1
        t.last_access = self.clock
        return tid

    # -- references and deallocation --------------------------------------

    def add_ref(self, tid):
        t = self.graph.tensors[tid]
        if t.refs <= 0:
            raise MalformedLogError(f"new reference to dead tensor {tid}")
        t.refs += 1
        self.graph.storages[t.storage].refs += 1

    def release(self, tid):
        """Drop one external reference; apply the deallocation policy when
        the storage's last reference goes."""
        t = self.graph.tensors[tid]
        if t.refs <= 0:
            raise MalformedLogError(f"release of tensor {tid} with no refs")
        t.refs -= 1
        s = self.graph.storages[t.storage]
        s.refs -= 1
        if s.refs > 0:
            return
        if self.policy == "eager-evict":
            if s.evictable:
                self.evict(s.id)
        elif self.policy == "banish":
            self.banish(s.id)
        elif self.policy == "banish-v2":
            for v in s.views:
                self.graph.tensors[v].last_access = NEG_INF

    handle_release = release

    def _blocks_banish(self, sid):
        g = self.graph
        for d in g.dependents[sid]:
            ds = g.storages[d]
            if not ds.resident:
                return True
            if not all(g.tensors[v].defined for v in ds.views):
                return True
        return False

    def banish(self, sid):
        """Permanently free a storage with no external references.

        Only legal once no dependent is evicted; otherwise the attempt is
        deferred and retried whenever an operator consuming ``sid``
        completes. Dependents of a banished storage become pinned.
        Returns ``"attempted"`` or ``"deferred"``.
        """
        g = self.graph
        s = g.storages[sid]
        if s.refs != 0:
            raise InvariantError(f"banishing referenced storage {sid}")
        if s.locks > 0 or self._blocks_banish(sid):
            self.pending_banish.add(sid)
            return "deferred"
        self.pending_banish.discard(sid)
        self.meta.on_remove(sid)
        if s.resident:
            s.resident = False
            self.memory -= s.size
        if s.pinned:
            self.telemetry.pinned_bytes -= s.size
            s.pinned = False
        for v in s.views:
            g.tensors[v].defined = False
        self.pool.discard(sid)
        for d in sorted(g.dependents[sid]):
            self._pin(g.storages[d])
        g.remove_storage(sid)
        self.telemetry.banish_count += 1
        return "attempted"

    def _retry_banish(self, storages):
        if not self.pending_banish:
            return
        for s in storages:
            if s.id in self.pending_banish and s.id in self.graph.storages:
                self.banish(s.id)

    # -- end of log ----------------------------------------------------------

    def enforce_output_condition(self):
        """Rematerialize and lock every tensor still externally referenced."""
        g = self.graph
        for t in g.tensors:
            if t.refs > 0 and t.storage in g.storages:
                self.materialize(t.id)
                self._lock([g.storages[t.storage]])

    def finish(self):
        self.telemetry.storage_accesses = self.meta.accesses
        return self.telemetry

    # -- inspection ----------------------------------------------------------

    def snapshot(self):
        """Residency code per storage id (REMOVED for banished ids)."""
        g = self.graph
        row = np.full(g._next_storage, REMOVED, dtype=np.int8)
        for sid, s in g.storages.items():
            if s.pinned:
                row[sid] = PINNED
            elif s.resident:
                row[sid] = RESIDENT
            else:
                row[sid] = EVICTED
        return row

    def audit(self, names=None, expect_unlocked=True):
        """Check every runtime invariant from scratch; raise on violation."""
        g = self.graph
        resident_bytes = 0
        pool = set()
        tensors = g.tensors
        for sid, s in g.storages.items():
            if s.resident:
                resident_bytes += s.size
                if s.locks == 0 and not s.pinned:
                    pool.add(sid)
            elif s.pinned:
                raise InvariantError(f"pinned storage {sid} not resident")
            refs = 0
            for v in s.views:
                t = tensors[v]
                refs += t.refs
                if t.defined and not s.resident:
                    raise InvariantError(f"tensor {v} defined, not resident")
            if s.refs != refs:
                raise InvariantError(f"refs mismatch on storage {sid}")
            if expect_unlocked and s.locks != 0:
                raise InvariantError(f"storage {sid} still locked")
        if resident_bytes != self.memory:
            raise InvariantError(
                f"memory {self.memory} != resident bytes {resident_bytes}")
        if self.budget is not None and self.memory > self.budget:
            raise InvariantError(
                f"memory {self.memory} over budget {self.budget}")
        if pool != self.pool:
            raise InvariantError("pool differs from recomputed evictable set")
        if names is not None:
            total = sum(s.refs for s in g.storages.values())
            if total != len(names):
                raise InvariantError(
                    f"{total} refs for {len(names)} name bindings")
        for sid in g.storages:
            for d in g.deps[sid]:
                if d == sid or sid not in g.dependents[d]:
                    raise InvariantError(f"bad edge {d}->{sid}")


def run(log, budget, heuristic, policy="eager-evict", thrash_factor=2,
        trace=False, audit=False, observer=None):
    """Replay ``log`` under ``budget`` bytes (None = unlimited).

    ``observer(step, instruction, runtime, names)`` is called after every
    instruction. With ``trace`` the outcome carries one residency snapshot
    per instruction. ``audit`` re-verifies all runtime invariants after
    every instruction (slow; meant for tests).
    """
    if isinstance(heuristic, str):
        heuristic = HeuristicSpec.parse(heuristic)
    factor = _as_fraction(thrash_factor)
    base = log.base_compute
    kill = None
    if budget is not None and base > 0:
        kill = int(factor * base * KILL_MULTIPLIER)
    rt = Runtime(budget, heuristic, policy, kill_compute=kill)
    rt.telemetry.base_compute = base
    names = {}
    rows = [] if trace else None
    status, message = "ok", ""
    try:
        for step, ins in enumerate(log):
            try:
                _oplog.apply(ins, names, rt)
            except MalformedLogError as exc:
                if exc.line is None:
                    raise MalformedLogError(
                        f"instruction {step}: {exc}", ins.line) from None
                raise
            if audit:
                rt.audit(names)
            if trace:
                rows.append(rt.snapshot())
            if observer is not None:
                observer(step, ins, rt, names)
        rt.enforce_output_condition()
        if audit:
            rt.audit(names, expect_unlocked=False)
    except OutOfMemory as exc:
        status, message = "oom", str(exc)
    except ThrashAbort as exc:
        status, message = "thrash", str(exc)
    tel = rt.finish()
    if status == "ok" and base > 0 and tel.total_compute >= factor * base:
        status = "thrash"
    return SimOutcome(status, tel, budget, heuristic.name, policy, message,
                      rows)


def unconstrained_peak(log):
    """Peak memory of ``log`` with no budget and eager frees on release."""
    out = run(log, None, "lru", policy="eager-evict")
    return out.telemetry.peak_memory
