"""Train a linear network in about 2*sqrt(N) memory.

A linear network of N layers keeps every activation alive until its
gradient is taken, so an unconstrained run peaks near N units. Here each
network gets a budget of 2*ceil(sqrt(N)) and the simulator decides what to
throw away and recompute. The interesting columns are the total compute
relative to the 2N operations of a plain run, and the longest stretch of
evicted activations seen during the backward pass.
"""

import math

from dtrsim import gen_linear
from dtrsim.generators import linear_bound_check


def main():
    print(f"{'N':>6} {'budget':>6} {'peak':>6} {'compute':>8} "
          f"{'x plain':>8} {'gap':>4} {'gap cap':>8}")
    for n in (64, 128, 256, 512, 1024):
        peak = gen_linear(n).peak_memory
        r = linear_bound_check(n)
        assert r["status"] == "ok"
        print(f"{n:>6} {r['B']:>6} {peak:>6} {r['total_compute']:>8} "
              f"{float(r['overhead']):>8.3f} {r['backward_gap']:>4} "
              f"{float(r['backward_bound']):>8.1f}")
    # memory shrinks like 1/sqrt(N) of the peak; compute grows only slowly
    n = 1024
    print(f"\nat N={n} the budget is {2 * math.ceil(math.sqrt(n))} units, "
          f"{2 * math.ceil(math.sqrt(n)) / gen_linear(n).peak_memory:.1%} "
          f"of the unconstrained peak")


if __name__ == "__main__":
    main()
