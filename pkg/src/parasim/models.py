"""Example operator graphs and device topologies.

The graphs are shaped after common DNN families (small CNNs, unrolled
recurrent stacks, an encoder/decoder with an attention-style join) but all
sizes are configurable and default small so searches stay desk-scale.
Recurrent cells are built from MatMul + ElementWise, unrolled per step, with
the step-to-step dependency carried by the ElementWise combine.
"""

from __future__ import annotations

from .graph import (
    DeviceTopology,
    Operation,
    OperatorGraph,
    OperatorKind,
    conv_out_size,
    parallelizable_dims,
    shape,
)
from .partition import ParallelizationConfig, ParallelizationStrategy

__all__ = [
    "rnn3",
    "lenet_like",
    "alexnet_like",
    "rnnlm_like",
    "rnntc_like",
    "nmt_like",
    "single_node_topology",
    "multi_node_topology",
    "rnn3_model_parallel_strategy",
    "MODEL_GENERATORS",
    "TOPOLOGY_GENERATORS",
]

FLOAT = 4  # element size used throughout the generators


def _embedding(g, op_id, batch, hidden, vocab):
    g.add_op(Operation(
        op_id, OperatorKind("Embedding", {"vocab_size": vocab}),
        (shape(("sample", batch)),),
        shape(("sample", batch), ("channel", hidden)),
        param_bytes=vocab * hidden * FLOAT,
    ))


def _matmul(g, op_id, src, out_channels, with_params=True):
    s = g.ops[src].output_shape
    features = s.volume() // s.size("sample")
    g.add_op(Operation(
        op_id, OperatorKind("MatMul"), (s,),
        shape(("sample", s.size("sample")), ("channel", out_channels)),
        param_bytes=features * out_channels * FLOAT if with_params else 0,
    ))
    g.add_tensor(src, op_id)


def _elementwise(g, op_id, srcs):
    s = g.ops[srcs[0]].output_shape
    g.add_op(Operation(op_id, OperatorKind("ElementWise"), tuple(s for _ in srcs), s))
    for slot, src in enumerate(srcs):
        g.add_tensor(src, op_id, dst_slot=slot)


def _conv2d(g, op_id, src, out_channels, kernel=3, stride=1, padding="same"):
    s = g.ops[src].output_shape
    cin = s.size("channel")
    out = shape(
        ("sample", s.size("sample")),
        ("height", conv_out_size(s.size("height"), kernel, stride, padding)),
        ("width", conv_out_size(s.size("width"), kernel, stride, padding)),
        ("channel", out_channels),
    )
    kind = OperatorKind("Conv2D", {
        "kernel_h": kernel, "kernel_w": kernel,
        "stride_h": stride, "stride_w": stride, "padding": padding,
    })
    g.add_op(Operation(op_id, kind, (s,), out,
                       param_bytes=cin * kernel * kernel * out_channels * FLOAT))
    g.add_tensor(src, op_id)


def _pool2d(g, op_id, src, kernel=2, stride=2, padding="valid"):
    s = g.ops[src].output_shape
    out = shape(
        ("sample", s.size("sample")),
        ("height", conv_out_size(s.size("height"), kernel, stride, padding)),
        ("width", conv_out_size(s.size("width"), kernel, stride, padding)),
        ("channel", s.size("channel")),
    )
    kind = OperatorKind("Pool2D", {
        "kernel_h": kernel, "kernel_w": kernel,
        "stride_h": stride, "stride_w": stride, "padding": padding,
    })
    g.add_op(Operation(op_id, kind, (s,), out))
    g.add_tensor(src, op_id)


def _recurrent_stack(g, prefix, steps, layers, feed, hidden):
    """Unrolled recurrent layers: per step, MatMul then a 2-input combine
    with the previous step's state.  ``feed(t)`` names the bottom input op.
    Returns the top-layer state op per step."""
    tops = []
    for t in range(steps):
        below = feed(t)
        for l in range(layers):
            mm = f"{prefix}_mm{l}_{t}"
            cell = f"{prefix}_cell{l}_{t}"
            _matmul(g, mm, below, hidden)
            if t == 0:
                _elementwise(g, cell, [mm])
            else:
                _elementwise(g, cell, [mm, f"{prefix}_cell{l}_{t - 1}"])
            below = cell
        tops.append(below)
    return tops


def rnn3(steps=2, batch=32, hidden=32, vocab=64) -> OperatorGraph:
    """Three-layer language model: embedding, one recurrent layer, output
    projection, unrolled ``steps`` times.  The canonical small fixture."""
    g = OperatorGraph()
    for t in range(steps):
        _embedding(g, f"embed{t}", batch, hidden, vocab)
    tops = _recurrent_stack(g, "rec", steps, 1, lambda t: f"embed{t}", hidden)
    for t, top in enumerate(tops):
        _matmul(g, f"out{t}", top, vocab)
    return g


def rnn3_model_parallel_strategy(g: OperatorGraph, topo: DeviceTopology) -> ParallelizationStrategy:
    """Layer-per-device placement for rnn3: embeddings, recurrent cells, and
    output projections each pinned, unsplit, to one of the first three devices."""
    devs = topo.device_ids()
    if len(devs) < 3:
        raise ValueError("rnn3 model parallelism needs at least 3 devices")
    configs = {}
    for op_id, op in g.ops.items():
        layer = 0 if op_id.startswith("embed") else (1 if op_id.startswith("rec") else 2)
        degrees = {n: 1 for n in parallelizable_dims(op)}
        configs[op_id] = ParallelizationConfig(degrees, (devs[layer],))
    return ParallelizationStrategy(configs)


def lenet_like(batch=4, image=8, in_channels=2, conv_channels=(4, 8),
               fc_hidden=16, classes=8) -> OperatorGraph:
    """Six-operation CNN: two conv/pool stages and two dense layers."""
    g = OperatorGraph()
    g.add_op(Operation(
        "conv1",
        OperatorKind("Conv2D", {"kernel_h": 3, "kernel_w": 3,
                                "stride_h": 1, "stride_w": 1, "padding": "same"}),
        (shape(("sample", batch), ("height", image), ("width", image), ("channel", in_channels)),),
        shape(("sample", batch), ("height", image), ("width", image), ("channel", conv_channels[0])),
        param_bytes=in_channels * 9 * conv_channels[0] * FLOAT,
    ))
    _pool2d(g, "pool1", "conv1")
    _conv2d(g, "conv2", "pool1", conv_channels[1])
    _pool2d(g, "pool2", "conv2")
    _matmul(g, "fc1", "pool2", fc_hidden)
    _matmul(g, "fc2", "fc1", classes)
    return g


def alexnet_like(batch=16, image=16, in_channels=3, base_channels=8,
                 fc_hidden=64, classes=16) -> OperatorGraph:
    """Strictly linear CNN: five convolutions with interleaved pooling, then
    three dense layers whose first carries most of the parameters."""
    c = base_channels
    g = OperatorGraph()
    g.add_op(Operation(
        "conv1",
        OperatorKind("Conv2D", {"kernel_h": 3, "kernel_w": 3,
                                "stride_h": 1, "stride_w": 1, "padding": "same"}),
        (shape(("sample", batch), ("height", image), ("width", image), ("channel", in_channels)),),
        shape(("sample", batch), ("height", image), ("width", image), ("channel", c)),
        param_bytes=in_channels * 9 * c * FLOAT,
    ))
    _pool2d(g, "pool1", "conv1")
    _conv2d(g, "conv2", "pool1", 2 * c)
    _pool2d(g, "pool2", "conv2")
    _conv2d(g, "conv3", "pool2", 4 * c)
    _conv2d(g, "conv4", "conv3", 4 * c)
    _conv2d(g, "conv5", "conv4", 2 * c)
    _pool2d(g, "pool3", "conv5")
    _matmul(g, "fc1", "pool3", fc_hidden)
    _matmul(g, "fc2", "fc1", fc_hidden)
    _matmul(g, "fc3", "fc2", classes)
    return g


def rnnlm_like(steps=2, layers=2, batch=16, hidden=32, vocab=64) -> OperatorGraph:
    """Language model: per-step embedding, a recurrent stack, and a per-step
    vocabulary projection."""
    g = OperatorGraph()
    for t in range(steps):
        _embedding(g, f"embed{t}", batch, hidden, vocab)
    tops = _recurrent_stack(g, "lm", steps, layers, lambda t: f"embed{t}", hidden)
    for t, top in enumerate(tops):
        _matmul(g, f"softmax{t}", top, vocab)
    return g


def rnntc_like(steps=4, layers=4, batch=16, hidden=32, vocab=64, classes=8) -> OperatorGraph:
    """Text classifier: recurrent stack over the sequence, single classifier
    read off the final step's state."""
    g = OperatorGraph()
    for t in range(steps):
        _embedding(g, f"embed{t}", batch, hidden, vocab)
    tops = _recurrent_stack(g, "tc", steps, layers, lambda t: f"embed{t}", hidden)
    _matmul(g, "classifier", tops[-1], classes)
    return g


def nmt_like(steps=4, layers=2, batch=16, hidden=32, vocab=64) -> OperatorGraph:
    """Encoder/decoder translator sketch.

    The encoder's final state feeds an attention-style combine on every
    decoder step, so the graph has parallel branches rather than one chain.
    """
    g = OperatorGraph()
    for t in range(steps):
        _embedding(g, f"enc_embed{t}", batch, hidden, vocab)
    enc_tops = _recurrent_stack(g, "enc", steps, layers, lambda t: f"enc_embed{t}", hidden)
    context = enc_tops[-1]
    for t in range(steps):
        _embedding(g, f"dec_embed{t}", batch, hidden, vocab)
    dec_tops = _recurrent_stack(g, "dec", steps, layers, lambda t: f"dec_embed{t}", hidden)
    for t, top in enumerate(dec_tops):
        _matmul(g, f"att_mm{t}", top, hidden)
        _elementwise(g, f"att{t}", [f"att_mm{t}", context])
        _matmul(g, f"softmax{t}", f"att{t}", vocab)
    return g


# ---------------------------------------------------------------------------
# topologies (bandwidth/latency defaults are illustrative placeholders, not
# measurements; supply real numbers for anything quantitative)

def single_node_topology(gpus=4, bandwidth=32e9, latency=1e-6, kind="gpu") -> DeviceTopology:
    """One host, fully connected device-to-device links."""
    topo = DeviceTopology()
    ids = [f"gpu{i:02d}" for i in range(gpus)]
    for d in ids:
        topo.add_device(d, kind, "node00")
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            topo.add_connection(a, b, bandwidth, latency)
    return topo


def multi_node_topology(nodes=2, gpus_per_node=4, intra_bandwidth=16e9,
                        inter_bandwidth=7e9, intra_latency=1e-6,
                        inter_latency=5e-6, kind="gpu") -> DeviceTopology:
    """Several hosts; faster links within a node, slower across nodes."""
    topo = DeviceTopology()
    ids = []
    for n in range(nodes):
        for i in range(gpus_per_node):
            dev = f"n{n:02d}g{i}"
            topo.add_device(dev, kind, f"node{n:02d}")
            ids.append((n, dev))
    for x, (na, a) in enumerate(ids):
        for nb, b in (ids[y] for y in range(x + 1, len(ids))):
            if na == nb:
                topo.add_connection(a, b, intra_bandwidth, intra_latency)
            else:
                topo.add_connection(a, b, inter_bandwidth, inter_latency)
    return topo


MODEL_GENERATORS = {
    "rnn3": rnn3,
    "lenet-like": lenet_like,
    "alexnet-like": alexnet_like,
    "rnnlm-like": rnnlm_like,
    "rnntc-like": rnntc_like,
    "nmt-like": nmt_like,
}

TOPOLOGY_GENERATORS = {
    "p100-node": single_node_topology,
    "k80-cluster": multi_node_topology,
}
