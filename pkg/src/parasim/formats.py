"""Versioned JSON serialization for graphs, topologies, strategies and
search reports.  Every document carries a top-level ``format_version`` so
stale files fail loudly instead of deserializing into garbage."""

from __future__ import annotations

import json

from .graph import (
    Connection,
    DeviceTopology,
    Operation,
    OperatorGraph,
    OperatorKind,
    TensorEdge,
    TensorShape,
)
from .partition import ParallelizationConfig, ParallelizationStrategy
from .search import ChainSummary, SearchReport

__all__ = [
    "FORMAT_VERSION",
    "FormatError",
    "graph_to_json", "graph_from_json", "save_graph", "load_graph",
    "topology_to_json", "topology_from_json", "save_topology", "load_topology",
    "strategy_to_json", "strategy_from_json", "save_strategy", "load_strategy",
    "report_to_json", "report_from_json", "save_report", "load_report",
]

FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def _check_version(obj, what: str):
    if not isinstance(obj, dict):
        raise FormatError(f"{what}: expected a JSON object at the top level")
    if "format_version" not in obj:
        raise FormatError(f"{what}: missing format_version")
    if obj["format_version"] != FORMAT_VERSION:
        raise FormatError(
            f"{what}: unsupported format_version {obj['format_version']!r}"
            f" (this build reads version {FORMAT_VERSION})"
        )


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- shapes ------------------------------------------------------------------

def _shape_obj(s: TensorShape) -> dict:
    return {"dims": [[n, sz] for n, sz in s.dims], "element_size": s.element_size}


def _shape_from(obj) -> TensorShape:
    return TensorShape(tuple((str(n), int(sz)) for n, sz in obj["dims"]),
                       int(obj.get("element_size", 4)))


# -- operator graphs ---------------------------------------------------------

def graph_to_json(g: OperatorGraph) -> str:
    ops = []
    for op_id in sorted(g.ops):
        op = g.ops[op_id]
        ops.append({
            "id": op.id,
            "kind": {"tag": op.kind.tag, "hyperparams": op.kind.hyperparams},
            "input_shapes": [_shape_obj(s) for s in op.input_shapes],
            "output_shape": _shape_obj(op.output_shape),
            "param_bytes": op.param_bytes,
        })
    tensors = [{"src": e.src, "dst": e.dst, "dst_slot": e.dst_slot,
                "shape": _shape_obj(e.shape)} for e in g.tensors]
    return _dumps({"format_version": FORMAT_VERSION, "ops": ops, "tensors": tensors})


def graph_from_json(text: str) -> OperatorGraph:
    obj = json.loads(text)
    _check_version(obj, "operator graph")
    g = OperatorGraph()
    for o in obj.get("ops", []):
        kind = OperatorKind(str(o["kind"]["tag"]), dict(o["kind"].get("hyperparams", {})))
        g.add_op(Operation(
            id=str(o["id"]),
            kind=kind,
            input_shapes=tuple(_shape_from(s) for s in o.get("input_shapes", [])),
            output_shape=_shape_from(o["output_shape"]),
            param_bytes=int(o.get("param_bytes", 0)),
        ))
    for t in obj.get("tensors", []):
        g.tensors.append(TensorEdge(str(t["src"]), str(t["dst"]),
                                    _shape_from(t["shape"]), int(t.get("dst_slot", 0))))
    return g


# -- device topologies -------------------------------------------------------

def topology_to_json(topo: DeviceTopology) -> str:
    devices = [{"id": d.id, "kind": d.kind, "node": d.node}
               for d in (topo.devices[i] for i in sorted(topo.devices))]
    connections = [{"a": c.a, "b": c.b, "bandwidth": c.bandwidth, "latency": c.latency}
                   for c in topo.connections]
    return _dumps({"format_version": FORMAT_VERSION,
                   "devices": devices, "connections": connections})


def topology_from_json(text: str) -> DeviceTopology:
    obj = json.loads(text)
    _check_version(obj, "device topology")
    topo = DeviceTopology()
    for d in obj.get("devices", []):
        topo.add_device(str(d["id"]), str(d.get("kind", "gpu")), str(d.get("node", "node0")))
    for c in obj.get("connections", []):
        topo.add_connection(str(c["a"]), str(c["b"]),
                            float(c["bandwidth"]), float(c.get("latency", 0.0)))
    return topo


# -- strategies --------------------------------------------------------------

def _strategy_obj(s: ParallelizationStrategy) -> dict:
    configs = {}
    for op_id in sorted(s.configs):
        cfg = s.configs[op_id]
        configs[op_id] = {
            "degrees": dict(cfg.degrees),
            "assignment": list(cfg.assignment) if cfg.assignment is not None else None,
        }
    return {"configs": configs}


def _strategy_from(obj) -> ParallelizationStrategy:
    configs = {}
    for op_id, c in obj.get("configs", {}).items():
        asg = c.get("assignment")
        configs[str(op_id)] = ParallelizationConfig(
            {str(k): int(v) for k, v in c.get("degrees", {}).items()},
            tuple(str(d) for d in asg) if asg is not None else None,
        )
    return ParallelizationStrategy(configs)


def strategy_to_json(s: ParallelizationStrategy) -> str:
    return _dumps({"format_version": FORMAT_VERSION, **_strategy_obj(s)})


def strategy_from_json(text: str) -> ParallelizationStrategy:
    obj = json.loads(text)
    _check_version(obj, "strategy")
    return _strategy_from(obj)


# -- search reports ----------------------------------------------------------

def report_to_json(r: SearchReport) -> str:
    return _dumps({
        "format_version": FORMAT_VERSION,
        "best_cost": r.best_cost,
        "best_strategy": _strategy_obj(r.best_strategy),
        "proposals": r.proposals,
        "termination": r.termination,
        "trace": [[i, c, bool(a)] for i, c, a in r.trace],
        "chains": [{
            "index": c.index,
            "initial_cost": c.initial_cost,
            "best_cost": c.best_cost,
            "proposals": c.proposals,
            "accepted": c.accepted,
            "beta": c.beta,
            "termination": c.termination,
        } for c in r.chains],
    })


def report_from_json(text: str) -> SearchReport:
    obj = json.loads(text)
    _check_version(obj, "search report")
    return SearchReport(
        best_strategy=_strategy_from(obj["best_strategy"]),
        best_cost=float(obj["best_cost"]),
        trace=[(int(i), float(c), bool(a)) for i, c, a in obj.get("trace", [])],
        proposals=int(obj.get("proposals", 0)),
        termination=str(obj.get("termination", "budget")),
        chains=[ChainSummary(int(c["index"]), c["initial_cost"], c["best_cost"],
                             int(c["proposals"]), int(c["accepted"]),
                             float(c["beta"]), str(c["termination"]))
                for c in obj.get("chains", [])],
    )


# -- file helpers ------------------------------------------------------------

def save_graph(g: OperatorGraph, path: str):
    with open(path, "w") as fh:
        fh.write(graph_to_json(g))


def load_graph(path: str) -> OperatorGraph:
    with open(path) as fh:
        return graph_from_json(fh.read())


def save_topology(topo: DeviceTopology, path: str):
    with open(path, "w") as fh:
        fh.write(topology_to_json(topo))


def load_topology(path: str) -> DeviceTopology:
    with open(path) as fh:
        return topology_from_json(fh.read())


def save_strategy(s: ParallelizationStrategy, path: str):
    with open(path, "w") as fh:
        fh.write(strategy_to_json(s))


def load_strategy(path: str) -> ParallelizationStrategy:
    with open(path) as fh:
        return strategy_from_json(fh.read())


def save_report(r: SearchReport, path: str):
    with open(path, "w") as fh:
        fh.write(report_to_json(r))


def load_report(path: str) -> SearchReport:
    with open(path) as fh:
        return report_from_json(fh.read())
