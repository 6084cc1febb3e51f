"""Command-line front end.

    dtrsim replay --log run.dtrlog --ratio 0.5 --heuristic dtr-full
    dtrsim sweep --log run.dtrlog --ratios 1,0.8,0.6 --heuristics dtr-full,lru
    dtrsim verify-bounds --theorem 1 --sizes 64,256,1024
    dtrsim gen linear --n 256 --out linear.dtrlog

Exit codes: 0 success, 1 usage or parse error, 2 out of memory (replay),
3 a bound check failed (verify-bounds).
"""

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction

from .errors import MalformedLogError
from .generators import (gen_linear, gen_random_dag, linear_bound_check,
                         run_adversary)
from .heuristics import HeuristicSpec
from .oplog import read_log, write_log
from .runtime import POLICIES, STATE_NAMES, REMOVED, run

EXIT_OK, EXIT_USAGE, EXIT_OOM, EXIT_BOUND = 0, 1, 2, 3

SWEEP_COLUMNS = ("heuristic", "policy", "budget_bytes", "budget_ratio",
                 "base_compute", "total_compute", "slowdown", "remats",
                 "evictions", "peak_memory", "storage_accesses", "status")

DEFAULT_SIZES = {1: "64,128,256,512,1024", 2: "512:8,512:16,512:32"}
ADVERSARY_HEURISTICS = ("compute-memory", "lru", "dtr-local")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; 2 is reserved for oom here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def default_seed():
    raw = os.environ.get("RMS_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"RMS_SEED must be an integer, got {raw!r}") from None


def split_heuristics(text):
    """Split a comma list of heuristic names, keeping ablation specs whole.

    >>> split_heuristics("lru,ablation:s=on,m=off,c=local,largest")
    ['lru', 'ablation:s=on,m=off,c=local', 'largest']
    """
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" in part and not part.startswith("ablation:") and out:
            out[-1] += "," + part
        else:
            out.append(part)
    return out


def parse_ratio(text):
    try:
        r = Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"bad ratio {text!r}") from None
    if r <= 0:
        raise UsageError(f"ratio must be positive, got {text!r}")
    return r


def budget_for(ratio, peak):
    return int(ratio * peak)


def fmt_ratio(x):
    return f"{float(x):.6f}"


def sweep_row(out, peak):
    tel = out.telemetry
    ratio = Fraction(out.budget, peak) if peak else Fraction(1)
    return {
        "heuristic": out.heuristic,
        "policy": out.policy,
        "budget_bytes": out.budget,
        "budget_ratio": fmt_ratio(ratio),
        "base_compute": tel.base_compute,
        "total_compute": tel.total_compute,
        "slowdown": fmt_ratio(Fraction(tel.total_compute, tel.base_compute)
                              if tel.base_compute else 1),
        "remats": tel.rematerialization_count,
        "evictions": tel.eviction_count,
        "peak_memory": tel.peak_memory,
        "storage_accesses": tel.storage_accesses,
        "status": out.status,
    }


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def write_trace(path, trace):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["step", "storage_id", "state"])
        for step, row in enumerate(trace):
            for sid, code in enumerate(row.tolist()):
                if code != REMOVED:
                    w.writerow([step, sid, STATE_NAMES[code]])


def _load(path):
    try:
        return read_log(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def _heuristic(name, seed):
    try:
        return HeuristicSpec.parse(name, seed=seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _policy(name):
    if name not in POLICIES:
        raise UsageError(f"unknown policy {name!r}; "
                         f"choose from {', '.join(POLICIES)}")
    return name


# -- replay -----------------------------------------------------------------

def cmd_replay(args):
    seed = default_seed()
    log = _load(args.log)
    h = _heuristic(args.heuristic, seed)
    policy = _policy(args.policy)
    peak = log.peak_memory
    if args.budget is not None:
        if args.budget < 0:
            raise UsageError("budget must be nonnegative")
        budget = args.budget
    else:
        budget = budget_for(parse_ratio(args.ratio), peak)
    out = run(log, budget, h, policy=policy,
              thrash_factor=parse_ratio(args.thrash_factor),
              trace=args.trace is not None)
    row = sweep_row(out, peak)
    if args.format == "csv":
        sys.stdout.write(rows_to_csv([row]))
    else:
        sys.stdout.write(json.dumps(row, sort_keys=True) + "\n")
    if args.trace is not None:
        write_trace(args.trace, out.trace)
    return EXIT_OOM if out.status == "oom" else EXIT_OK


# -- sweep ------------------------------------------------------------------

_WORKER_LOG = None


def _init_worker(log):
    global _WORKER_LOG
    _WORKER_LOG = log


def _sweep_task(task):
    h, policy, budget, factor = task
    return run(_WORKER_LOG, budget, h, policy=policy, thrash_factor=factor)


def cmd_sweep(args):
    seed = default_seed()
    log = _load(args.log)
    ratios = [parse_ratio(r) for r in args.ratios.split(",") if r.strip()]
    heuristics = [_heuristic(n, seed)
                  for n in split_heuristics(args.heuristics)]
    policies = [_policy(p.strip()) for p in args.policies.split(",")
                if p.strip()]
    if not (ratios and heuristics and policies):
        raise UsageError("ratios, heuristics and policies must be non-empty")
    factor = parse_ratio(args.thrash_factor)
    peak = log.peak_memory

    tasks, keys = [], []
    for h in heuristics:
        for policy in policies:
            for r in ratios:
                tasks.append((h, policy, budget_for(r, peak), factor))
                keys.append((h.name, policy, -r))

    if args.parallel and args.parallel > 1:
        with ProcessPoolExecutor(args.parallel, initializer=_init_worker,
                                 initargs=(log,)) as pool:
            outcomes = list(pool.map(_sweep_task, tasks))
    else:
        _init_worker(log)
        outcomes = [_sweep_task(t) for t in tasks]

    order = sorted(range(len(tasks)), key=lambda i: keys[i])
    text = rows_to_csv([sweep_row(outcomes[i], peak) for i in order])
    if args.out:
        with open(args.out, "w", newline="") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- verify-bounds ------------------------------------------------------------

def _linear_bounds(sizes):
    results, failures = [], []
    baseline = None
    for n in sorted(sizes):
        if n < 3:
            raise UsageError("linear network sizes must be at least 3")
        r = linear_bound_check(n)
        if baseline is None:
            baseline = r["overhead"]
        checks = {
            "status_ok": r["status"] == "ok",
            "forward_exact": r["forward_computations"] == n,
            "post_forward_gap": r["post_forward_gap"] is not None
            and r["post_forward_gap"] <= r["post_forward_bound"],
            "backward_gap": r["backward_gap"] <= r["backward_bound"],
            "overhead_bounded": r["overhead"] <= Fraction(5, 4) * baseline,
        }
        entry = {k: (float(v) if isinstance(v, Fraction) else v)
                 for k, v in r.items()}
        entry["checks"] = checks
        entry["passed"] = all(checks.values())
        results.append(entry)
        if not entry["passed"]:
            failures.append(entry)
    return results, failures


def _adversary_bounds(pairs):
    results, failures = [], []
    for n, b in pairs:
        for name in ADVERSARY_HEURISTICS:
            try:
                rep = run_adversary(n, b, name)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            entry = rep.as_dict()
            entry["bound"] = n / (4 * b)
            checks = {"ratio_bound": rep.ratio >= Fraction(n, 4 * b),
                      "static_exact": rep.static_cost == n}
            entry["checks"] = checks
            entry["passed"] = all(checks.values())
            results.append(entry)
            if not entry["passed"]:
                failures.append(entry)
    return results, failures


def _parse_sizes(theorem, text):
    items = [s.strip() for s in text.split(",") if s.strip()]
    try:
        if theorem == 1:
            return [int(s) for s in items]
        pairs = []
        for s in items:
            n, _, b = s.partition(":")
            pairs.append((int(n), int(b)))
        return pairs
    except ValueError:
        raise UsageError(f"bad --sizes {text!r}") from None


def cmd_verify_bounds(args):
    text = args.sizes or DEFAULT_SIZES[args.theorem]
    sizes = _parse_sizes(args.theorem, text)
    if not sizes:
        raise UsageError("no sizes given")
    if args.theorem == 1:
        results, failures = _linear_bounds(sizes)
    else:
        results, failures = _adversary_bounds(sizes)
    report = {"theorem": args.theorem, "passed": not failures,
              "results": results}
    if failures:
        report["failures"] = failures
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_BOUND if failures else EXIT_OK


# -- gen ----------------------------------------------------------------------

def cmd_gen(args):
    if args.kind == "linear":
        if args.n < 2:
            raise UsageError("linear network needs --n >= 2")
        write_log(gen_linear(args.n), args.out)
        return EXIT_OK
    if args.kind == "random":
        if args.nodes < 1:
            raise UsageError("--nodes must be at least 1")
        seed = args.seed if args.seed is not None else default_seed()
        log = gen_random_dag(args.nodes, max_fanin=args.max_fanin, seed=seed,
                             unit=args.unit)
        write_log(log, args.out)
        return EXIT_OK
    try:
        report, log = run_adversary(args.n, args.budget, args.heuristic,
                                    return_log=True)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.out:
        write_log(log, args.out)
    sys.stdout.write(report.to_json() + "\n")
    return EXIT_OK


def build_parser():
    p = _Parser(prog="dtrsim",
                description="Replay tensor-operator logs under a memory "
                            "budget with rematerialization.")
    sub = p.add_subparsers(dest="command", required=True,
                           parser_class=_Parser)

    r = sub.add_parser("replay", help="replay one log at one budget")
    r.add_argument("--log", required=True)
    g = r.add_mutually_exclusive_group(required=True)
    g.add_argument("--budget", type=int, help="budget in bytes")
    g.add_argument("--ratio", help="budget as a fraction of the peak")
    r.add_argument("--heuristic", default="dtr-full")
    r.add_argument("--policy", default="eager-evict")
    r.add_argument("--thrash-factor", default="2.0")
    r.add_argument("--trace", metavar="FILE",
                   help="write per-step residency CSV here")
    r.add_argument("--format", choices=("json", "csv"), default="json")
    r.set_defaults(func=cmd_replay)

    s = sub.add_parser("sweep", help="replay over budgets x heuristics")
    s.add_argument("--log", required=True)
    s.add_argument("--ratios", default="1.0,0.9,0.8,0.7,0.6,0.5,0.4,0.3")
    s.add_argument("--heuristics", default="dtr-full,dtr-eqclass,dtr-local,"
                   "lru,largest,msps,random")
    s.add_argument("--policies", default="eager-evict")
    s.add_argument("--thrash-factor", default="2.0")
    s.add_argument("--out", metavar="CSV")
    s.add_argument("--parallel", type=int, default=1, metavar="N")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify-bounds",
                       help="check the overhead bounds empirically")
    v.add_argument("--theorem", type=int, choices=(1, 2), required=True)
    v.add_argument("--sizes",
                   help="1: linear network sizes N; 2: adversary N:B pairs")
    v.add_argument("--out", metavar="JSON")
    v.set_defaults(func=cmd_verify_bounds)

    gen = sub.add_parser("gen", help="write a synthetic log")
    gsub = gen.add_subparsers(dest="kind", required=True,
                              parser_class=_Parser)
    lin = gsub.add_parser("linear")
    lin.add_argument("--n", type=int, required=True)
    lin.add_argument("--out", required=True)
    rnd = gsub.add_parser("random")
    rnd.add_argument("--nodes", type=int, required=True)
    rnd.add_argument("--max-fanin", type=int, default=3)
    rnd.add_argument("--seed", type=int)
    rnd.add_argument("--unit", action="store_true",
                     help="unit costs and sizes")
    rnd.add_argument("--out", required=True)
    adv = gsub.add_parser("adversary")
    adv.add_argument("--n", type=int, required=True)
    adv.add_argument("--budget", type=int, required=True)
    adv.add_argument("--heuristic", default="compute-memory")
    adv.add_argument("--out", help="also write the revealed graph as a log")
    gen.set_defaults(func=cmd_gen)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, MalformedLogError) as exc:
        print(f"dtrsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
