"""Shared builders for the test suite.

``random_graph`` grows a small valid operator DAG covering all eight operator
kinds; ``random_topology`` wraps the two topology generators; the manual
task-graph builder bypasses operator-level construction so scheduling tests
can pin exact timings.
"""

import random

from parasim import (
    CostProfile,
    DeviceTopology,
    MODE_FORWARD,
    Operation,
    OperatorGraph,
    OperatorKind,
    ParallelizationStrategy,
    conv_out_size,
    shape,
    validate_graph,
)
from parasim.models import multi_node_topology, single_node_topology
from parasim.taskgraph import TaskGraph

FLOAT = 4


def _source(g, rng, name):
    """Add a source op (inputs resident, no feeding edge); returns its id."""
    batch = rng.choice((2, 4, 8))
    flavor = rng.choice(("embed", "vector", "image", "sequence"))
    if flavor == "embed":
        vocab, hidden = rng.choice((8, 16)), rng.choice((4, 8))
        g.add_op(Operation(
            name, OperatorKind("Embedding", {"vocab_size": vocab}),
            (shape(("sample", batch)),),
            shape(("sample", batch), ("channel", hidden)),
            param_bytes=vocab * hidden * FLOAT,
        ))
    elif flavor == "vector":
        cin, cout = rng.choice((4, 8)), rng.choice((4, 8, 16))
        g.add_op(Operation(
            name, OperatorKind("MatMul"),
            (shape(("sample", batch), ("channel", cin)),),
            shape(("sample", batch), ("channel", cout)),
            param_bytes=cin * cout * FLOAT,
        ))
    elif flavor == "image":
        side, cin, cout = rng.choice((4, 8)), rng.choice((1, 2)), rng.choice((2, 4))
        kind = OperatorKind("Conv2D", {
            "kernel_h": 3, "kernel_w": 3, "stride_h": 1, "stride_w": 1,
            "padding": "same",
        })
        g.add_op(Operation(
            name, kind,
            (shape(("sample", batch), ("height", side), ("width", side), ("channel", cin)),),
            shape(("sample", batch), ("height", side), ("width", side), ("channel", cout)),
            param_bytes=cin * 9 * cout * FLOAT,
        ))
    else:
        length, cin, cout = rng.choice((4, 8, 16)), rng.choice((2, 4)), rng.choice((2, 4))
        kind = OperatorKind("Conv1D", {"kernel": 3, "stride": 1, "padding": "same"})
        g.add_op(Operation(
            name, kind,
            (shape(("sample", batch), ("length", length), ("channel", cin)),),
            shape(("sample", batch), ("length", length), ("channel", cout)),
            param_bytes=cin * 3 * cout * FLOAT,
        ))
    return name


def _grow(g, rng, name, avail):
    """Attach one op downstream of something in ``avail``; returns its id or None."""
    src = rng.choice(avail)
    s = g.ops[src].output_shape
    names = s.names()
    moves = ["matmul", "elementwise"]
    if "height" in names:
        moves += ["conv2d"]
        if s.size("height") % 2 == 0 and s.size("width") % 2 == 0:
            moves += ["pool2d"]
    elif "length" in names:
        moves += ["conv1d"]
        if s.size("length") % 2 == 0:
            moves += ["pool1d"]
    twins = [o for o in avail if o != src and g.ops[o].output_shape == s]
    if twins:
        moves += ["elementwise2"]
    sig = tuple((n, sz) for n, sz in s.dims if n != "channel")
    mates = [
        o for o in avail
        if o != src and "channel" in g.ops[o].output_shape.names()
        and tuple((n, sz) for n, sz in g.ops[o].output_shape.dims if n != "channel") == sig
    ] if "channel" in names else []
    if mates:
        moves += ["concat"]
    move = rng.choice(moves)
    if move == "matmul":
        cout = rng.choice((4, 8, 16))
        features = s.volume() // s.size("sample")
        g.add_op(Operation(
            name, OperatorKind("MatMul"), (s,),
            shape(("sample", s.size("sample")), ("channel", cout)),
            param_bytes=features * cout * FLOAT,
        ))
        g.add_tensor(src, name)
    elif move == "elementwise":
        g.add_op(Operation(name, OperatorKind("ElementWise"), (s,), s))
        g.add_tensor(src, name)
    elif move == "elementwise2":
        other = rng.choice(twins)
        g.add_op(Operation(name, OperatorKind("ElementWise"), (s, s), s))
        g.add_tensor(src, name, dst_slot=0)
        g.add_tensor(other, name, dst_slot=1)
    elif move == "concat":
        other = rng.choice(mates)
        o = g.ops[other].output_shape
        out = shape(*(
            (n, sz + o.size(n)) if n == "channel" else (n, sz) for n, sz in s.dims
        ), element_size=s.element_size)
        g.add_op(Operation(name, OperatorKind("Concat", {"axis": "channel"}), (s, o), out))
        g.add_tensor(src, name, dst_slot=0)
        g.add_tensor(other, name, dst_slot=1)
    elif move == "conv2d":
        cout = rng.choice((2, 4, 8))
        kind = OperatorKind("Conv2D", {
            "kernel_h": 3, "kernel_w": 3, "stride_h": 1, "stride_w": 1,
            "padding": "same",
        })
        out = shape(
            ("sample", s.size("sample")), ("height", s.size("height")),
            ("width", s.size("width")), ("channel", cout),
        )
        g.add_op(Operation(name, kind, (s,), out,
                           param_bytes=s.size("channel") * 9 * cout * FLOAT))
        g.add_tensor(src, name)
    elif move == "pool2d":
        kind = OperatorKind("Pool2D", {
            "kernel_h": 2, "kernel_w": 2, "stride_h": 2, "stride_w": 2,
            "padding": "valid",
        })
        out = shape(
            ("sample", s.size("sample")),
            ("height", conv_out_size(s.size("height"), 2, 2, "valid")),
            ("width", conv_out_size(s.size("width"), 2, 2, "valid")),
            ("channel", s.size("channel")),
        )
        g.add_op(Operation(name, kind, (s,), out))
        g.add_tensor(src, name)
    elif move == "conv1d":
        cout = rng.choice((2, 4, 8))
        kind = OperatorKind("Conv1D", {"kernel": 3, "stride": 1, "padding": "same"})
        out = shape(
            ("sample", s.size("sample")), ("length", s.size("length")), ("channel", cout),
        )
        g.add_op(Operation(name, kind, (s,), out,
                           param_bytes=s.size("channel") * 3 * cout * FLOAT))
        g.add_tensor(src, name)
    elif move == "pool1d":
        kind = OperatorKind("Pool1D", {"kernel": 2, "stride": 2, "padding": "valid"})
        out = shape(
            ("sample", s.size("sample")),
            ("length", conv_out_size(s.size("length"), 2, 2, "valid")),
            ("channel", s.size("channel")),
        )
        g.add_op(Operation(name, kind, (s,), out))
        g.add_tensor(src, name)
    return name


def random_graph(rng: random.Random, min_ops=4, max_ops=12) -> OperatorGraph:
    g = OperatorGraph()
    counter = [0]

    def fresh(prefix):
        counter[0] += 1
        return f"{prefix}{counter[0]:02d}"

    avail = [_source(g, rng, fresh("src")) for _ in range(rng.randint(1, 2))]
    target = rng.randint(min_ops, max_ops)
    while len(g.ops) < target:
        avail.append(_grow(g, rng, fresh("op"), avail))
    rep = validate_graph(g)
    assert rep.ok, rep.issues
    return g


def random_topology(rng: random.Random, devices: int) -> DeviceTopology:
    if devices >= 4 and devices % 2 == 0 and rng.random() < 0.5:
        return multi_node_topology(
            nodes=2, gpus_per_node=devices // 2,
            intra_bandwidth=rng.choice((8e9, 16e9)),
            inter_bandwidth=rng.choice((2e9, 7e9)),
            intra_latency=rng.choice((0.0, 1e-6)),
            inter_latency=rng.choice((1e-6, 5e-6)),
        )
    return single_node_topology(
        gpus=devices,
        bandwidth=rng.choice((1e9, 8e9, 32e9)),
        latency=rng.choice((0.0, 1e-6)),
    )


def manual_task_graph(specs, edges, devices=("d0", "d1")):
    """Build a bare task graph from (name, device, exe_time) rows.

    Returns (tg, name->task id map).  The operator-level fields are empty
    shells; only the scheduling machinery sees this graph.
    """
    topo = DeviceTopology()
    for d in devices:
        topo.add_device(d)
    tg = TaskGraph(OperatorGraph(), topo, ParallelizationStrategy({}), CostProfile(),
                   MODE_FORWARD)
    ids = {}
    for name, dev, exe in specs:
        ids[name] = tg._new_task("normal", dev, exe, ("op", name, 0), name, 0).id
    for a, b in edges:
        tg._link(ids[a], ids[b])
    return tg, ids
