#!/usr/bin/env python3
"""Regenerate the golden fixtures under tests/data/.

The committed numbers pin the simulator's observable behavior: structural
counts of the built task graph and the reference makespan produced by the
event-driven oracle (oracle_simulate, which shares no scheduling code with
full_simulate).  Rerun after any intentional behavior change:

    python3 scripts/regen_goldens.py

and commit the diff together with the change that caused it.
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from parasim import (  # noqa: E402
    CostProfile,
    MODE_FORWARD,
    build_task_graph,
    oracle_simulate,
)
from parasim.models import rnn3, rnn3_model_parallel_strategy, single_node_topology  # noqa: E402

DATA = Path(__file__).resolve().parents[1] / "tests" / "data"


def rnn3_model_parallel() -> dict:
    g = rnn3()
    topo = single_node_topology(gpus=3)
    strategy = rnn3_model_parallel_strategy(g, topo)
    tg = build_task_graph(g, topo, strategy, CostProfile(), MODE_FORWARD)
    makespan = oracle_simulate(tg)
    comm = sum(1 for t in tg.tasks.values() if t.kind == "comm")
    return {
        "generated_by": "scripts/regen_goldens.py, makespan from oracle_simulate",
        "regenerate": "python3 scripts/regen_goldens.py",
        "fixture": {
            "model": "rnn3 (defaults: steps=2, batch=32, hidden=32, vocab=64)",
            "topology": "single_node_topology(gpus=3)",
            "strategy": "rnn3_model_parallel_strategy (layer per device)",
            "mode": MODE_FORWARD,
            "profile": "CostProfile() with the analytic fallback",
        },
        "task_count": len(tg.tasks),
        "compute_task_count": len(tg.tasks) - comm,
        "comm_task_count": comm,
        "dependency_edge_count": sum(len(t.outputs) for t in tg.tasks.values()),
        "comm_bytes_total": tg.total_comm_bytes,
        "oracle_makespan": makespan,
    }


GOLDENS = {
    "rnn3_model_parallel.json": rnn3_model_parallel,
}


def main() -> int:
    DATA.mkdir(parents=True, exist_ok=True)
    for name, gen in GOLDENS.items():
        path = DATA / name
        path.write_text(json.dumps(gen(), indent=2) + "\n")
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
