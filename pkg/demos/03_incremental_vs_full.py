#!/usr/bin/env python3
"""Time incremental timeline repair against full re-simulation.

Search proposals change one op at a time, so the simulator can repair the
existing timeline instead of rebuilding it.  This script applies a chain of
random single-op config changes to a translation-model fixture on 64 GPUs
and times delta_simulate against full_simulate on the same updated graph,
verifying they agree exactly at every step.
"""

import random
import time

from parasim import (
    CostProfile,
    MODE_FULL,
    ParallelizationConfig,
    build_task_graph,
    delta_simulate,
    enumerate_configs,
    full_simulate,
    random_strategy,
    update_task_graph,
)
from parasim.models import nmt_like, single_node_topology

PROPOSALS = 300


def main():
    g = nmt_like(steps=4, layers=2, batch=32, hidden=32, vocab=64)
    topo = single_node_topology(gpus=64)
    profile = CostProfile()
    tg = build_task_graph(g, topo, random_strategy(g, topo, 8, 0), profile, MODE_FULL)
    full_simulate(tg)
    print(f"{len(g.ops)} ops -> {len(tg.tasks)} tasks on {len(topo.devices)} devices")

    rng = random.Random(1)
    ops = sorted(g.ops)
    devices = topo.device_ids()
    t_delta = t_full = 0.0
    for _ in range(PROPOSALS):
        op_id = rng.choice(ops)
        cfg = rng.choice(enumerate_configs(g.ops[op_id], topo, 8))
        assignment = tuple(rng.choice(devices) for _ in range(cfg.size()))
        _, changed = update_task_graph(tg, g, topo, op_id,
                                       ParallelizationConfig(dict(cfg.degrees), assignment))

        t0 = time.perf_counter()
        incremental = delta_simulate(tg, changed)
        t_delta += time.perf_counter() - t0

        t0 = time.perf_counter()
        rebuilt = full_simulate(tg)
        t_full += time.perf_counter() - t0

        assert incremental.makespan == rebuilt.makespan

    print(f"{PROPOSALS} single-op changes, every makespan identical")
    print(f"  delta_simulate: {1e3 * t_delta / PROPOSALS:.3f} ms per change")
    print(f"  full_simulate:  {1e3 * t_full / PROPOSALS:.3f} ms per change")
    print(f"  speedup: {t_full / t_delta:.2f}x")


if __name__ == "__main__":
    main()
