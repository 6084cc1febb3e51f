"""Synthetic workloads.

* :func:`gen_linear` -- an N-layer linear feedforward network plus its
  backward pass, unit cost and size, with releases placed exactly where
  each tensor stops being live.
* :func:`run_adversary` -- the online adversarial graph: B paths hanging off
  a pinned root, each new node appended to the end of a path that currently
  has nothing resident, so the whole path must be recomputed.
* :func:`gen_random_dag` -- seeded random DAG logs for property tests.
"""

import json
import math
import random
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .graph import OutputSpec
from .heuristics import HeuristicSpec
from .oplog import Call, Constant, OpLog, Release
from .runtime import EVICTED, REMOVED, Runtime, run


def _unit_call(inputs, output, op):
    return Call(list(inputs), [output], 1, op, [1], [None])


def gen_linear(n):
    """Linear network of ``n`` layers with gradients, as an OpLog.

    Forward tensors are named ``t1..tn`` and gradients ``g1..gn``; ``t0``
    is a pinned size-0 constant that stays live throughout. Storage ids
    come out in creation order: ``t0`` -> 0, ``ti`` -> i, and ``gi`` ->
    ``2n + 1 - i``. ``g2`` and ``g1`` are still referenced at the end.
    """
    if n < 2:
        raise ValueError("linear network needs at least 2 layers")
    ins = [Constant("t0", 0), _unit_call([], "t1", "f1")]
    for i in range(2, n + 1):
        ins.append(_unit_call([f"t{i - 1}"], f"t{i}", f"f{i}"))
    ins.append(Release(f"t{n}"))
    ins.append(_unit_call([f"t{n - 1}"], f"g{n}", f"df{n}"))
    ins.append(Release(f"t{n - 1}"))
    for i in range(n - 1, 1, -1):
        ins.append(_unit_call([f"t{i - 1}", f"g{i + 1}"], f"g{i}", f"df{i}"))
        ins.append(Release(f"t{i - 1}"))
        ins.append(Release(f"g{i + 1}"))
    ins.append(_unit_call(["g2"], "g1", "df1"))
    return OpLog(ins)


def linear_forward_storage(i):
    """Storage id of forward tensor ``ti`` in :func:`gen_linear` logs."""
    return i


def max_evicted_run(row, n):
    """Longest run of consecutive evicted forward tensors ``t1..tn``.

    ``row`` is a residency snapshot; banished tensors are skipped, so a run
    is measured between the nearest surviving resident neighbors.
    """
    codes = np.asarray(row)[linear_forward_storage(1):
                            linear_forward_storage(n) + 1]
    evicted = (codes[codes != REMOVED] == EVICTED).astype(np.int8)
    if not evicted.any():
        return 0
    edges = np.flatnonzero(np.diff(np.concatenate(([0], evicted, [0]))))
    return int((edges[1::2] - edges[::2]).max())


def linear_bound_check(n, budget=None, heuristic="compute-memory",
                   policy="banish", audit=False):
    """Replay ``gen_linear(n)`` at ``2*ceil(sqrt(n))`` and gather bound data.

    Returns a dict with the total compute, the forward computation count,
    the largest evicted run right after ``tn`` is computed and the largest
    one seen at any later step, next to their allowed maxima.
    """
    if budget is None:
        budget = 2 * math.ceil(math.sqrt(n))
    state = {"forward": None, "post_forward_gap": None, "backward_gap": 0}

    def observe(step, ins, rt, names):
        if state["forward"] is None:
            if isinstance(ins, Call) and ins.outputs[0] == f"t{n}":
                state["forward"] = rt.telemetry.total_compute
                state["post_forward_gap"] = max_evicted_run(rt.snapshot(), n)
            return
        state["backward_gap"] = max(state["backward_gap"],
                                    max_evicted_run(rt.snapshot(), n))

    out = run(gen_linear(n), budget, heuristic, policy=policy, audit=audit,
              observer=observe)
    tel = out.telemetry
    return {
        "N": n,
        "B": budget,
        "status": out.status,
        "total_compute": tel.total_compute,
        "forward_computations": state["forward"],
        "overhead": Fraction(tel.total_compute, 2 * n),
        "post_forward_gap": state["post_forward_gap"],
        "post_forward_bound": Fraction(2 * (n - 2), budget - 1),
        "backward_gap": state["backward_gap"],
        "backward_bound": Fraction(4 * (n - 2), budget - 1),
    }


@dataclass
class AdversaryReport:
    n: int
    budget: int
    heuristic: str
    dtr_cost: int
    static_cost: int
    path_lengths: list

    @property
    def ratio(self):
        return Fraction(self.dtr_cost, self.static_cost)

    def as_dict(self):
        return {"N": self.n, "B": self.budget, "heuristic": self.heuristic,
                "dtr_cost": self.dtr_cost, "static_cost": self.static_cost,
                "ratio": float(self.ratio), "path_lengths": self.path_lengths}

    def to_json(self):
        return json.dumps(self.as_dict(), sort_keys=True)


def run_adversary(n, budget, heuristic, return_log=False, audit=False):
    """Drive a runtime online against the adversarial graph.

    The root ``t0`` is a pinned size-0 constant with ``budget`` unit-cost,
    unit-size children. Each further node extends the lowest-index path with
    no resident tensor. Right after the first ``budget`` children every path
    may still hold its tip, in which case path 0 is extended; from then on
    the freshly computed pair fills two units so an empty path always
    exists. The reported cost excludes the end-of-log output condition.
    ``audit`` re-checks the runtime invariants after every node.
    """
    if isinstance(heuristic, str):
        heuristic = HeuristicSpec.parse(heuristic)
    if heuristic.random:
        raise ValueError("the adversary needs a deterministic heuristic")
    if not 2 <= budget < n:
        raise ValueError("need 2 <= B < N")

    rt = Runtime(budget, heuristic, policy="ignore")
    ins = [Constant("t0", 0)]
    root = rt.constant(0, name="t0")
    paths = []
    names = []
    for j in range(budget):
        name = f"p{j}_1"
        paths.append(rt.call(name, 1, [root], [OutputSpec(1)]))
        names.append([name])
        ins.append(_unit_call(["t0"], name, name))
        if audit:
            rt.audit()
    revealed = budget
    while revealed < n:
        target = 0
        for j, path in enumerate(paths):
            if not any(rt.is_resident(t) for t in path):
                target = j
                break
        tip = paths[target][-1]
        name = f"p{target}_{len(paths[target]) + 1}"
        paths[target].append(rt.call(name, 1, [tip], [OutputSpec(1)])[0])
        ins.append(_unit_call([names[target][-1]], name, name))
        rt.release(tip)
        ins.append(Release(names[target][-1]))
        names[target].append(name)
        revealed += 1
        if audit:
            rt.audit()

    report = AdversaryReport(n, budget, heuristic.name,
                             rt.telemetry.total_compute, n,
                             [len(p) for p in paths])
    if return_log:
        return report, OpLog(ins)
    return report


def gen_random_dag(nodes, max_fanin=3, seed=0, unit=False, window=16,
                   alias_prob=0.1, multi_output_prob=0.1, backward=True,
                   max_size=4, max_cost=10):
    """Seeded random DAG log shaped like one training step.

    Forward node ``k`` computes ``x{k}`` from ``x{k-1}`` plus up to
    ``max_fanin - 1`` earlier nodes drawn from the last ``window``. With
    ``backward`` set, a mirrored gradient pass follows: ``g{k}`` consumes the
    forward inputs of node ``k`` and the gradients of every node that read
    ``x{k}``. Each name is released right after its last use, so activations
    stay live until their gradient step. Only ``g0`` (or the last forward
    node when ``backward`` is off) survives to the end. Some forward calls
    also emit an alias view of their first input or a second, ephemeral
    output; both are released immediately.
    """
    if nodes < 1:
        raise ValueError("need at least one node")
    rng = random.Random(seed)
    inputs = []
    for k in range(nodes):
        if k == 0 or max_fanin == 0:
            inputs.append([])
            continue
        fanin = rng.randint(1, min(max_fanin, k))
        pool = list(range(max(0, k - window), k - 1))
        extra = rng.sample(pool, min(fanin - 1, len(pool)))
        inputs.append([k - 1] + sorted(extra))

    consumers = [[] for _ in range(nodes)]
    for k, ins_k in enumerate(inputs):
        for i in ins_k:
            consumers[i].append(k)

    def size():
        return 1 if unit else rng.randint(1, max_size)

    def cost():
        return 1 if unit else rng.randint(1, max_cost)

    # instruction index -> names whose last use it is
    steps = []
    for k in range(nodes):
        steps.append(("f", k, [f"x{i}" for i in inputs[k]]))
    if backward:
        for k in range(nodes - 1, -1, -1):
            args = [f"x{i}" for i in inputs[k]]
            args += [f"g{j}" for j in sorted(consumers[k])]
            steps.append(("b", k, args))
    survivor = "g0" if backward else f"x{nodes - 1}"
    last_use = {}
    for idx, (_, _, args) in enumerate(steps):
        for name in args:
            last_use[name] = idx

    out = []
    for idx, (kind, k, args) in enumerate(steps):
        name = f"x{k}" if kind == "f" else f"g{k}"
        outputs, sizes, aliases = [name], [size()], [None]
        ephemeral = []
        if kind == "f" and args and rng.random() < alias_prob:
            outputs.append(f"v{k}")
            sizes.append(0)
            aliases.append(args[0])
            ephemeral.append(f"v{k}")
        if kind == "f" and rng.random() < multi_output_prob:
            outputs.append(f"y{k}")
            sizes.append(size())
            aliases.append(None)
            ephemeral.append(f"y{k}")
        op = f"op{k}" if kind == "f" else f"dop{k}"
        out.append(Call(args, outputs, cost(), op, sizes, aliases))
        for e in ephemeral:
            out.append(Release(e))
        for a in dict.fromkeys(args):
            if last_use[a] == idx:
                out.append(Release(a))
        if name not in last_use and name != survivor:
            out.append(Release(name))
    return OpLog(out)
