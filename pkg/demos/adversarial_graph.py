"""Watch an adaptive graph punish any deterministic eviction rule.

The graph is revealed one node at a time. It hangs B unit paths off a
free root, and each new node extends a path whose tensors are currently
all evicted, which forces a full replay of that path. A static planner
that sees the whole graph up front needs only N operations. An online
runtime with B units of memory pays roughly N/(4B) times that or more.
"""

from dtrsim import run_adversary


def main():
    n = 512
    print(f"{'heuristic':<16}{'B':>4}{'cost':>8}{'ratio':>8}{'N/(4B)':>8}"
          f"  path lengths")
    for heuristic in ("compute-memory", "lru", "dtr-local", "dtr-full"):
        for b in (8, 16, 32):
            rep = run_adversary(n, b, heuristic)
            lengths = sorted(rep.path_lengths, reverse=True)[:5]
            print(f"{heuristic:<16}{b:>4}{rep.dtr_cost:>8}"
                  f"{float(rep.ratio):>8.2f}{n / (4 * b):>8.2f}  "
                  f"{lengths} ...")


if __name__ == "__main__":
    main()
