"""Compare eviction heuristics on a random network with a backward pass.

Every heuristic replays the same log at shrinking fractions of the
unconstrained peak. The table shows the compute slowdown (or the failure
status), followed by how many metadata lookups each heuristic paid for
at half the peak. Cheaper approximations of the recompute cost trade a
little slowdown for far fewer lookups.

    python demos/heuristic_shootout.py [nodes] [seed]
"""

import sys
from fractions import Fraction

from dtrsim import gen_random_dag, run

HEURISTICS = ("dtr-full", "dtr-eqclass", "dtr-local", "msps", "lru",
              "largest", "random")
RATIOS = [Fraction(k, 10) for k in (9, 7, 5, 4, 3)]


def main(argv):
    nodes = int(argv[1]) if len(argv) > 1 else 300
    seed = int(argv[2]) if len(argv) > 2 else 0
    log = gen_random_dag(nodes, seed=seed)
    peak = log.peak_memory
    print(f"{nodes} nodes, {len(log)} instructions, peak {peak}, "
          f"base compute {log.base_compute}\n")

    print(f"{'heuristic':<14}" + "".join(f"{float(r):>9.1f}" for r in RATIOS))
    lookups = {}
    for h in HEURISTICS:
        cells = []
        for r in RATIOS:
            out = run(log, int(r * peak), h)
            if r == Fraction(1, 2):
                lookups[h] = out.telemetry.storage_accesses
            cells.append(f"{out.telemetry.slowdown:>9.3f}"
                         if out.status == "ok" else f"{out.status:>9}")
        print(f"{h:<14}" + "".join(cells))

    print("\nmetadata lookups at 0.5:")
    for h in HEURISTICS:
        print(f"  {h:<14}{lookups[h]:>10}")


if __name__ == "__main__":
    main(sys.argv)
