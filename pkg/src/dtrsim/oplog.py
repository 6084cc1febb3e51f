"""Operation-log format: JSON lines, one instruction object per line.

Every object carries an ``"instr"`` field naming the variant::

    CALL     {"inputs": [..], "outputs": [..], "cost": int, "op": str}
    MUTATE   {"inputs": [..], "mutated": [..], "cost": int, "op": str}
    MEMORY   {"tensor": name, "size": int}
    ALIAS    {"output": name, "source": name | null}
    CONSTANT {"tensor": name}
    COPY     {"dst": name, "src": name}
    COPYFROM {"dst": name, "src": name}
    RELEASE  {"tensor": name}

A CALL is followed, for each output in order, by one MEMORY and then one
ALIAS record. A CONSTANT is followed by one MEMORY record. The parser folds
these trailers into the :class:`Call` / :class:`Constant` records, and the
serializer expands them again. Canonical serialization sorts keys and uses
no whitespace.
"""

import gzip
import io
import json
from dataclasses import dataclass, field
from typing import List, Optional

from .errors import MalformedLogError
from .graph import OutputSpec


@dataclass
class Call:
    inputs: List[str]
    outputs: List[str]
    cost: int
    op: str
    sizes: List[int]
    aliases: List[Optional[str]]
    line: int = field(default=0, compare=False)


@dataclass
class Mutate:
    inputs: List[str]
    mutated: List[str]
    cost: int
    op: str
    line: int = field(default=0, compare=False)


@dataclass
class Constant:
    tensor: str
    size: int
    line: int = field(default=0, compare=False)


@dataclass
class Copy:
    dst: str
    src: str
    line: int = field(default=0, compare=False)


@dataclass
class CopyFrom:
    dst: str
    src: str
    line: int = field(default=0, compare=False)


@dataclass
class Release:
    tensor: str
    line: int = field(default=0, compare=False)


class OpLog:
    """Immutable-by-convention list of grouped instructions."""

    def __init__(self, instructions):
        self.instructions = list(instructions)
        self._peak = None

    def __len__(self):
        return len(self.instructions)

    def __iter__(self):
        return iter(self.instructions)

    def __eq__(self, other):
        return isinstance(other, OpLog) and \
            self.instructions == other.instructions

    @property
    def base_compute(self):
        """Total logged operator cost, i.e. the unlimited-memory cost."""
        return sum(i.cost for i in self.instructions
                   if isinstance(i, (Call, Mutate)))

    @property
    def peak_memory(self):
        """Peak memory of an unconstrained replay (eager frees on release)."""
        if self._peak is None:
            from .runtime import unconstrained_peak
            self._peak = unconstrained_peak(self)
        return self._peak

    def records(self):
        """Flat JSON-ready dicts, trailers expanded."""
        out = []
        for ins in self.instructions:
            if isinstance(ins, Call):
                out.append({"instr": "CALL", "inputs": list(ins.inputs),
                            "outputs": list(ins.outputs), "cost": ins.cost,
                            "op": ins.op})
                for name, size, src in zip(ins.outputs, ins.sizes,
                                           ins.aliases):
                    out.append({"instr": "MEMORY", "tensor": name,
                                "size": size})
                    out.append({"instr": "ALIAS", "output": name,
                                "source": src})
            elif isinstance(ins, Mutate):
                out.append({"instr": "MUTATE", "inputs": list(ins.inputs),
                            "mutated": list(ins.mutated), "cost": ins.cost,
                            "op": ins.op})
            elif isinstance(ins, Constant):
                out.append({"instr": "CONSTANT", "tensor": ins.tensor})
                out.append({"instr": "MEMORY", "tensor": ins.tensor,
                            "size": ins.size})
            elif isinstance(ins, Copy):
                out.append({"instr": "COPY", "dst": ins.dst, "src": ins.src})
            elif isinstance(ins, CopyFrom):
                out.append({"instr": "COPYFROM", "dst": ins.dst,
                            "src": ins.src})
            elif isinstance(ins, Release):
                out.append({"instr": "RELEASE", "tensor": ins.tensor})
            else:
                raise TypeError(f"not an instruction: {ins!r}")
        return out


def canonical_line(record):
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def serialize(log):
    return "".join(canonical_line(r) + "\n" for r in log.records())


def canonicalize(text):
    """Canonical form of raw log text, blank lines dropped."""
    return "".join(canonical_line(json.loads(line)) + "\n"
                   for line in text.splitlines() if line.strip())


_FIELDS = {
    "CALL": {"inputs", "outputs", "cost", "op"},
    "MUTATE": {"inputs", "mutated", "cost", "op"},
    "MEMORY": {"tensor", "size"},
    "ALIAS": {"output", "source"},
    "CONSTANT": {"tensor"},
    "COPY": {"dst", "src"},
    "COPYFROM": {"dst", "src"},
    "RELEASE": {"tensor"},
}


def _name(value, what, line):
    if not isinstance(value, str):
        raise MalformedLogError(f"{what} must be a tensor name string", line)
    return value


def _names(value, what, line):
    if not isinstance(value, list):
        raise MalformedLogError(f"{what} must be a list of names", line)
    return [_name(v, what, line) for v in value]


def _int(value, what, line, minimum):
    if isinstance(value, bool) or not isinstance(value, int) \
            or value < minimum:
        raise MalformedLogError(
            f"{what} must be an integer >= {minimum}, got {value!r}", line)
    return value


def _decode(lines):
    records = []
    for lineno, text in enumerate(lines, 1):
        if not text.strip():
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedLogError(f"invalid JSON: {exc.msg}", lineno,
                                    exc.colno) from None
        if not isinstance(obj, dict) or "instr" not in obj:
            raise MalformedLogError("expected an object with 'instr'", lineno)
        kind = obj["instr"]
        if kind not in _FIELDS:
            raise MalformedLogError(f"unknown instr {kind!r}", lineno)
        keys = set(obj) - {"instr"}
        if keys != _FIELDS[kind]:
            raise MalformedLogError(
                f"{kind} expects fields {sorted(_FIELDS[kind])}, "
                f"got {sorted(keys)}", lineno)
        records.append((lineno, obj))
    return records


def parse(stream):
    """Parse and validate log text (a str or a text stream) into an OpLog.

    Checks arity, MEMORY/ALIAS sequencing and that every name is bound when
    used. Errors carry the offending line number.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    records = _decode(stream)
    bound = set()
    out = []
    i = 0

    def need(name, line):
        if name not in bound:
            raise MalformedLogError(f"undefined tensor name {name!r}", line)

    def define(name, line):
        if name in bound:
            raise MalformedLogError(f"duplicate definition of {name!r}", line)
        bound.add(name)

    def trailer(kind, name, line_of_head):
        if i >= len(records):
            raise MalformedLogError(
                f"expected {kind} for {name!r}, log ended", line_of_head)
        line, obj = records[i]
        if obj["instr"] != kind:
            raise MalformedLogError(
                f"expected {kind} for {name!r}, got {obj['instr']}", line)
        key = "tensor" if kind == "MEMORY" else "output"
        if obj[key] != name:
            raise MalformedLogError(
                f"{kind} names {obj[key]!r}, expected {name!r}", line)
        return line, obj

    while i < len(records):
        line, obj = records[i]
        i += 1
        kind = obj["instr"]
        if kind == "CALL":
            inputs = _names(obj["inputs"], "inputs", line)
            outputs = _names(obj["outputs"], "outputs", line)
            cost = _int(obj["cost"], "cost", line, 1)
            if not isinstance(obj["op"], str):
                raise MalformedLogError("op must be a string", line)
            for name in inputs:
                need(name, line)
            if len(set(outputs)) != len(outputs):
                raise MalformedLogError("repeated output name", line)
            sizes, aliases = [], []
            for name in outputs:
                mline, mem = trailer("MEMORY", name, line)
                sizes.append(_int(mem["size"], "size", mline, 0))
                i += 1
                aline, alias = trailer("ALIAS", name, line)
                src = alias["source"]
                if src is not None:
                    _name(src, "source", aline)
                    if src not in inputs:
                        raise MalformedLogError(
                            f"alias source {src!r} is not an input", aline)
                aliases.append(src)
                i += 1
            for name in outputs:
                define(name, line)
            out.append(Call(inputs, outputs, cost, obj["op"], sizes, aliases,
                            line))
        elif kind == "MUTATE":
            inputs = _names(obj["inputs"], "inputs", line)
            mutated = _names(obj["mutated"], "mutated", line)
            cost = _int(obj["cost"], "cost", line, 1)
            if not isinstance(obj["op"], str):
                raise MalformedLogError("op must be a string", line)
            for name in inputs:
                need(name, line)
            if not set(mutated) <= set(inputs):
                raise MalformedLogError("mutated must be a subset of inputs",
                                        line)
            if len(set(mutated)) != len(mutated):
                raise MalformedLogError("repeated mutated name", line)
            out.append(Mutate(inputs, mutated, cost, obj["op"], line))
        elif kind == "CONSTANT":
            name = _name(obj["tensor"], "tensor", line)
            mline, mem = trailer("MEMORY", name, line)
            size = _int(mem["size"], "size", mline, 0)
            i += 1
            define(name, line)
            out.append(Constant(name, size, line))
        elif kind in ("COPY", "COPYFROM"):
            dst = _name(obj["dst"], "dst", line)
            src = _name(obj["src"], "src", line)
            need(src, line)
            if kind == "COPY":
                define(dst, line)
                out.append(Copy(dst, src, line))
            else:
                need(dst, line)
                out.append(CopyFrom(dst, src, line))
        elif kind == "RELEASE":
            name = _name(obj["tensor"], "tensor", line)
            need(name, line)
            bound.discard(name)
            out.append(Release(name, line))
        else:
            raise MalformedLogError(f"stray {kind} record", line)
    return OpLog(out)


def read_log(path):
    """Parse a ``.dtrlog`` file; gzip when the name ends in ``.gz``."""
    path = str(path)
    if path.endswith(".gz"):
        with gzip.open(path, "rt", encoding="utf-8") as fh:
            return parse(fh)
    with open(path, encoding="utf-8") as fh:
        return parse(fh)


def write_log(log, path):
    path = str(path)
    text = serialize(log)
    if path.endswith(".gz"):
        # mtime and name pinned so the bytes are reproducible
        with open(path, "wb") as raw, \
                gzip.GzipFile(filename="", fileobj=raw, mode="wb",
                              mtime=0) as fh:
            fh.write(text.encode("utf-8"))
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


# -- lowering onto a runtime ------------------------------------------------
#
# ``names`` maps each bound log name to a runtime tensor id. Every binding
# owns exactly one external reference, so sum(refs) == len(names) holds at
# every instruction boundary.

def _resolve(names, name, line):
    try:
        return names[name]
    except KeyError:
        raise MalformedLogError(f"undefined tensor name {name!r}",
                                line) from None


def lower_call(ins, names, rt):
    inputs = [_resolve(names, n, ins.line) for n in ins.inputs]
    specs = []
    for size, src in zip(ins.sizes, ins.aliases):
        if src is None:
            specs.append(OutputSpec(size))
        else:
            specs.append(OutputSpec(0, ins.inputs.index(src)))
    outs = rt.call(ins.op, ins.cost, inputs, specs)
    for name, tid in zip(ins.outputs, outs):
        names[name] = tid
    return outs


def lower_mutate(ins, names, rt):
    """In-place op as a pure op producing fresh clones of the mutated inputs.

    ``op(x)`` becomes ``x' = op(x); x = x'``: each mutated name is rebound
    to a new non-aliasing tensor the size of its old storage, and the old
    tensor loses the reference the name held.
    """
    inputs = [_resolve(names, n, ins.line) for n in ins.inputs]
    specs = [OutputSpec(rt.storage_size(names[n])) for n in ins.mutated]
    outs = rt.call(ins.op, ins.cost, inputs, specs)
    for name, tid in zip(ins.mutated, outs):
        old = names[name]
        names[name] = tid
        rt.release(old)
    return outs


def apply_copy_semantics(ins, names, rt):
    """COPY / COPYFROM / RELEASE: reference counts and bindings only."""
    if isinstance(ins, Copy):
        src = _resolve(names, ins.src, ins.line)
        if ins.dst in names:
            raise MalformedLogError(f"duplicate definition of {ins.dst!r}",
                                    ins.line)
        rt.add_ref(src)
        names[ins.dst] = src
    elif isinstance(ins, CopyFrom):
        src = _resolve(names, ins.src, ins.line)
        old = _resolve(names, ins.dst, ins.line)
        rt.add_ref(src)
        names[ins.dst] = src
        rt.release(old)
    elif isinstance(ins, Release):
        tid = _resolve(names, ins.tensor, ins.line)
        del names[ins.tensor]
        rt.release(tid)
    else:
        raise TypeError(f"not a copy/release instruction: {ins!r}")


def lower_constant(ins, names, rt):
    if ins.tensor in names:
        raise MalformedLogError(f"duplicate definition of {ins.tensor!r}",
                                ins.line)
    tid = rt.constant(ins.size, name=ins.tensor)
    names[ins.tensor] = tid
    return tid


def apply(ins, names, rt):
    """Execute one grouped instruction against runtime ``rt``."""
    if isinstance(ins, Call):
        for n in ins.outputs:
            if n in names:
                raise MalformedLogError(f"duplicate definition of {n!r}",
                                        ins.line)
        return lower_call(ins, names, rt)
    if isinstance(ins, Mutate):
        return lower_mutate(ins, names, rt)
    if isinstance(ins, Constant):
        return lower_constant(ins, names, rt)
    return apply_copy_semantics(ins, names, rt)
