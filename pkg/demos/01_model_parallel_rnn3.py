#!/usr/bin/env python3
"""Simulate the rnn3 language model with one layer pinned per device.

Builds the three-layer fixture, places embeddings / recurrent cells /
output projections on three separate GPUs, and walks through what the
simulator produces: the task breakdown, the per-device timeline, and a
chrome://tracing file you can open in a browser.
"""

from parasim import (
    CostProfile,
    MODE_FORWARD,
    build_task_graph,
    full_simulate,
    timeline_table,
    write_chrome_trace,
)
from parasim.models import rnn3, rnn3_model_parallel_strategy, single_node_topology


def main():
    g = rnn3()  # steps=2, batch=32, hidden=32, vocab=64
    topo = single_node_topology(gpus=3)
    strategy = rnn3_model_parallel_strategy(g, topo)

    print("operator graph:")
    for op_id in g.topological_order():
        op = g.ops[op_id]
        dev = strategy.configs[op_id].assignment[0]
        print(f"  {op_id:<8} {op.kind.tag:<10} out={op.output_shape.sizes()}  -> {dev}")

    tg = build_task_graph(g, topo, strategy, CostProfile(), MODE_FORWARD)
    comm = [t for t in tg.tasks.values() if t.kind == "comm"]
    print(f"\ntask graph: {len(tg.tasks)} tasks ({len(comm)} transfers, "
          f"{sum(t.nbytes for t in comm):.0f} bytes cross-device)")

    res = full_simulate(tg)
    print(f"makespan: {res.makespan * 1e6:.3f} us\n")
    print(f"{'task':<24} {'device':<16} {'start us':>9} {'end us':>9}")
    for origin, (start, end, device) in sorted(timeline_table(tg).items(),
                                               key=lambda kv: kv[1][0]):
        name = ":".join(str(x) for x in origin)
        print(f"{name:<24} {device:<16} {start * 1e6:>9.3f} {end * 1e6:>9.3f}")

    write_chrome_trace(tg, "rnn3_trace.json")
    print("\nwrote rnn3_trace.json (open via chrome://tracing or ui.perfetto.dev)")


if __name__ == "__main__":
    main()
