#!/usr/bin/env python3
"""Replace the analytic cost model with measured task times.

Task times come from a CostProfile: a text table keyed by (op kind, shape
digest, output-block dims, device kind).  Anything missing falls back to the
analytic model and is counted, so you can see exactly how much of a
simulation rests on real measurements.  This script fabricates a "measured"
profile for one op, shows the fallback counter at work, and round-trips the
profile through its text format.
"""

from parasim import (
    AnalyticCostModel,
    CostProfile,
    MODE_FORWARD,
    build_task_graph,
    cost_digest,
    cost_key_for,
    data_parallel_strategy,
    full_simulate,
    load_profile,
    output_region,
    save_profile,
)
from parasim.models import rnn3, single_node_topology


def main():
    g = rnn3()
    topo = single_node_topology(gpus=2)
    strategy = data_parallel_strategy(g, topo)
    profile = CostProfile(fallback=AnalyticCostModel())

    res = full_simulate(build_task_graph(g, topo, strategy, profile, MODE_FORWARD))
    print(f"analytic only: makespan {res.makespan * 1e6:.3f} us, "
          f"{profile.fallback_evaluations} fallback lookups")

    # pretend we measured the sample-split embedding block on a gpu
    op = g.ops["embed0"]
    cfg = strategy.configs["embed0"]
    key = cost_key_for(op, output_region(op, cfg, 0), topo.devices["gpu00"].kind)
    measured = CostProfile(entries={key: 123e-6}, fallback=AnalyticCostModel())
    print(f"\nprofile entry for embed digest {cost_digest(op)}: 123 us")

    res = full_simulate(build_task_graph(g, topo, strategy, measured, MODE_FORWARD))
    print(f"with measurement: makespan {res.makespan * 1e6:.3f} us "
          f"(embedding now dominates), {measured.fallback_evaluations} fallback lookups")

    save_profile(measured, "measured.profile")
    with open("measured.profile") as f:
        print("\nmeasured.profile:")
        for line in f:
            print(f"  {line.rstrip()}")
    reloaded = load_profile("measured.profile")
    assert reloaded.entries == measured.entries
    print("round-trip ok; discover digests for your own graph via: "
          "parasim enumerate --graph ... --topology ...")


if __name__ == "__main__":
    main()
