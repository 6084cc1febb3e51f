"""What to do with a tensor once the program drops its last reference.

Four policies are compared on a 256-layer linear network:

  ignore       leave it resident until the budget forces it out
  eager-evict  evict it right away but keep it recomputable
  banish       free it for good once nothing evicted still needs it
  banish-v2    make it the first eviction candidate instead

For each policy the script reports the compute at 40% of the peak and
the smallest budget on a 5% grid that still completes.
"""

from fractions import Fraction

from dtrsim import gen_linear, run

POLICIES = ("ignore", "eager-evict", "banish", "banish-v2")


def smallest_feasible(log, policy):
    best = None
    for k in range(100, 0, -5):
        out = run(log, int(Fraction(k, 100) * log.peak_memory), "dtr-full",
                  policy=policy)
        if out.status != "ok":
            break
        best = k
    return best


def main():
    log = gen_linear(256)
    budget = int(Fraction(2, 5) * log.peak_memory)
    print(f"peak {log.peak_memory}, budget at 0.4 = {budget}\n")
    print(f"{'policy':<12}{'status':>8}{'compute':>9}{'remats':>8}"
          f"{'min %':>7}")
    for policy in POLICIES:
        out = run(log, budget, "dtr-full", policy=policy)
        tel = out.telemetry
        low = smallest_feasible(log, policy)
        print(f"{policy:<12}{out.status:>8}{tel.total_compute:>9}"
              f"{tel.rematerialization_count:>8}"
              f"{low if low is not None else '-':>7}")


if __name__ == "__main__":
    main()
