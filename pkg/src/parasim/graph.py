"""Operator graphs and device topologies.

Tensors are described by named dimensions drawn from a fixed vocabulary;
operations declare their input/output shapes so downstream modules can
reason about how an output partition maps back onto inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = [
    "DIM_NAMES",
    "PADDINGS",
    "KIND_TAGS",
    "TensorShape",
    "shape",
    "OperatorKind",
    "Operation",
    "TensorEdge",
    "OperatorGraph",
    "Device",
    "Connection",
    "DeviceTopology",
    "ValidationReport",
    "parallelizable_dims",
    "conv_out_size",
    "pad_before",
    "expected_output_shape",
    "validate_graph",
    "validate_topology",
]

# Dimension vocabulary, in the order they appear in canonical shapes.
DIM_NAMES = ("sample", "channel", "length", "height", "width")

PADDINGS = ("same", "valid")

KIND_TAGS = (
    "MatMul",
    "Conv1D",
    "Conv2D",
    "Pool1D",
    "Pool2D",
    "Embedding",
    "ElementWise",
    "Concat",
)


@dataclass(frozen=True)
class TensorShape:
    """An ordered list of (dimension-name, size) pairs plus the element width."""

    dims: tuple[tuple[str, int], ...]
    element_size: int = 4  # bytes per element

    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.dims)

    def sizes(self) -> tuple[int, ...]:
        return tuple(s for _, s in self.dims)

    def size(self, name: str) -> int:
        for n, s in self.dims:
            if n == name:
                return s
        raise KeyError(name)

    def has(self, name: str) -> bool:
        return any(n == name for n, _ in self.dims)

    def volume(self) -> int:
        v = 1
        for _, s in self.dims:
            v *= s
        return v

    def nbytes(self) -> int:
        return self.volume() * self.element_size


def shape(*dims: tuple[str, int], element_size: int = 4) -> TensorShape:
    """Shorthand constructor: ``shape(("sample", 64), ("channel", 256))``."""
    return TensorShape(tuple(dims), element_size)


@dataclass(frozen=True)
class OperatorKind:
    """Operator type tag plus the hyperparameters that shape its kernel.

    Structural information (input channel counts, spatial extents) lives in
    the owning Operation's shapes, not here; hyperparams hold only what the
    shapes cannot express (kernel/stride/padding, vocab size, concat axis).
    """

    tag: str
    hyperparams: dict = field(default_factory=dict)

    def hp(self, name: str, default=None):
        return self.hyperparams.get(name, default)


@dataclass(frozen=True)
class Operation:
    id: str
    kind: OperatorKind
    input_shapes: tuple[TensorShape, ...]
    output_shape: TensorShape
    param_bytes: int = 0  # trainable parameter footprint, bytes


@dataclass(frozen=True)
class TensorEdge:
    """A tensor flowing from ``src``'s output into input slot ``dst_slot`` of ``dst``."""

    src: str
    dst: str
    shape: TensorShape
    dst_slot: int = 0


class OperatorGraph:
    """A DAG of operations connected by tensor edges."""

    def __init__(self):
        self.ops: dict[str, Operation] = {}
        self.tensors: list[TensorEdge] = []

    def add_op(self, op: Operation) -> Operation:
        if op.id in self.ops:
            raise ValueError(f"duplicate operation id: {op.id}")
        self.ops[op.id] = op
        return op

    def add_tensor(self, src: str, dst: str, dst_slot: int = 0) -> TensorEdge:
        """Connect src's output to dst; the edge carries src's output shape."""
        edge_shape = self.ops[src].output_shape if src in self.ops else shape(("sample", 1))
        edge = TensorEdge(src, dst, edge_shape, dst_slot)
        self.tensors.append(edge)
        return edge

    def in_edges(self, op_id: str) -> list[TensorEdge]:
        return sorted((e for e in self.tensors if e.dst == op_id), key=lambda e: e.dst_slot)

    def out_edges(self, op_id: str) -> list[TensorEdge]:
        return [e for e in self.tensors if e.src == op_id]

    def predecessors(self, op_id: str) -> list[str]:
        seen, out = set(), []
        for e in self.tensors:
            if e.dst == op_id and e.src not in seen:
                seen.add(e.src)
                out.append(e.src)
        return out

    def successors(self, op_id: str) -> list[str]:
        seen, out = set(), []
        for e in self.tensors:
            if e.src == op_id and e.dst not in seen:
                seen.add(e.dst)
                out.append(e.dst)
        return out

    def topological_order(self) -> list[str]:
        """Kahn's algorithm; raises ValueError if the graph has a cycle."""
        indeg = {oid: 0 for oid in self.ops}
        for e in self.tensors:
            if e.src in indeg and e.dst in indeg:
                indeg[e.dst] += 1
        ready = [oid for oid, d in indeg.items() if d == 0]
        order: list[str] = []
        while ready:
            oid = ready.pop(0)
            order.append(oid)
            for succ in self.successors(oid):
                if succ not in indeg:
                    continue  # dangling edge; the validator reports it
                indeg[succ] -= len([e for e in self.tensors if e.src == oid and e.dst == succ])
                if indeg[succ] == 0:
                    ready.append(succ)
        if len(order) != len(self.ops):
            raise ValueError("cycle detected in operator graph")
        return order


@dataclass(frozen=True)
class Device:
    id: str
    kind: str  # device class, e.g. "gpu"; cost/profile lookups key on this
    node: str  # host machine label


@dataclass(frozen=True)
class Connection:
    """An undirected hardware link between two devices."""

    a: str
    b: str
    bandwidth: float  # bytes per second
    latency: float = 0.0  # seconds

    def key(self) -> tuple[str, str]:
        return (self.a, self.b) if self.a <= self.b else (self.b, self.a)

    def other(self, device_id: str) -> str:
        return self.b if device_id == self.a else self.a


class DeviceTopology:
    def __init__(self):
        self.devices: dict[str, Device] = {}
        self.connections: list[Connection] = []
        self._by_pair: dict[tuple[str, str], Connection] = {}

    def add_device(self, device_id: str, kind: str = "gpu", node: str = "node0") -> Device:
        if device_id in self.devices:
            raise ValueError(f"duplicate device id: {device_id}")
        dev = Device(device_id, kind, node)
        self.devices[device_id] = dev
        return dev

    def add_connection(self, a: str, b: str, bandwidth: float, latency: float = 0.0) -> Connection:
        conn = Connection(a, b, bandwidth, latency)
        self.connections.append(conn)
        self._by_pair.setdefault(conn.key(), conn)
        return conn

    def connection_between(self, a: str, b: str) -> Connection | None:
        return self._by_pair.get((a, b) if a <= b else (b, a))

    def device_ids(self) -> list[str]:
        return sorted(self.devices)


@dataclass
class ValidationReport:
    issues: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def add(self, msg: str):
        self.issues.append(msg)


def parallelizable_dims(op: Operation) -> dict[str, str]:
    """Map each partitionable output dimension to its parallelism class.

    Classes: "sample" (batch; always present), "attribute" (splitting the
    dimension leaves every trainable parameter on every partition), and
    "parameter" (splitting the dimension also splits the parameters).
    """
    tag = op.kind.tag
    out = op.output_shape
    if tag == "MatMul":
        dims = {"sample": "sample", "channel": "parameter"}
    elif tag == "Conv1D":
        dims = {"sample": "sample", "length": "attribute", "channel": "parameter"}
    elif tag == "Conv2D":
        dims = {"sample": "sample", "height": "attribute", "width": "attribute", "channel": "parameter"}
    elif tag == "Pool1D":
        dims = {"sample": "sample", "length": "attribute", "channel": "attribute"}
    elif tag == "Pool2D":
        dims = {"sample": "sample", "height": "attribute", "width": "attribute", "channel": "attribute"}
    elif tag == "Embedding":
        dims = {"sample": "sample", "length": "attribute", "channel": "parameter"}
    elif tag in ("ElementWise", "Concat"):
        dims = {n: ("sample" if n == "sample" else "attribute") for n in out.names()}
    else:
        raise ValueError(f"unknown operator kind: {tag}")
    return {n: c for n, c in dims.items() if out.has(n)}


def conv_out_size(in_size: int, kernel: int, stride: int, padding: str) -> int:
    if padding == "same":
        return -(-in_size // stride)  # ceil division
    return (in_size - kernel) // stride + 1


def pad_before(in_size: int, kernel: int, stride: int, padding: str) -> int:
    if padding == "valid":
        return 0
    out = conv_out_size(in_size, kernel, stride, padding)
    total = max((out - 1) * stride + kernel - in_size, 0)
    return total // 2


def _spatial_names(tag: str) -> tuple[str, ...]:
    return ("length",) if tag.endswith("1D") else ("height", "width")


def _kernel_strides(kind: OperatorKind) -> tuple[tuple[int, ...], tuple[int, ...]]:
    if kind.tag.endswith("1D"):
        return (kind.hp("kernel", 1),), (kind.hp("stride", 1),)
    return (
        (kind.hp("kernel_h", 1), kind.hp("kernel_w", 1)),
        (kind.hp("stride_h", 1), kind.hp("stride_w", 1)),
    )


def expected_output_shape(op: Operation) -> TensorShape | None:
    """Output shape implied by the operator kind and its input shapes.

    Returns None when the inputs are structurally unusable for the kind (the
    validator reports such cases separately).  The output channel count of
    MatMul/Conv/Embedding is free, so the declared output's value is used.
    """
    tag = op.kind.tag
    ins = op.input_shapes
    out = op.output_shape
    if tag == "MatMul":
        # Dense layer: consumes every non-sample input dim (flattened features).
        if len(ins) != 1 or not ins[0].has("sample"):
            return None
        if out.names() != ("sample", "channel"):
            return None
        return shape(("sample", ins[0].size("sample")), ("channel", out.size("channel")),
                     element_size=out.element_size)
    if tag in ("Conv1D", "Conv2D", "Pool1D", "Pool2D"):
        spatial = _spatial_names(tag)
        want = ("sample",) + spatial + ("channel",)
        if len(ins) != 1 or ins[0].names() != want or out.names() != want:
            return None
        kernels, strides = _kernel_strides(op.kind)
        padding = op.kind.hp("padding", "same")
        dims = [("sample", ins[0].size("sample"))]
        for name, k, st in zip(spatial, kernels, strides):
            dims.append((name, conv_out_size(ins[0].size(name), k, st, padding)))
        if tag.startswith("Pool"):
            dims.append(("channel", ins[0].size("channel")))
        else:
            dims.append(("channel", out.size("channel") if out.has("channel") else 0))
        return TensorShape(tuple(dims), out.element_size)
    if tag == "Embedding":
        if len(ins) != 1 or ins[0].has("channel") or not ins[0].has("sample"):
            return None
        if not out.has("channel"):
            return None
        return TensorShape(ins[0].dims + (("channel", out.size("channel")),), out.element_size)
    if tag == "ElementWise":
        if not ins or any(s.dims != ins[0].dims for s in ins):
            return None
        return TensorShape(ins[0].dims, out.element_size)
    if tag == "Concat":
        axis = op.kind.hp("axis")
        if not ins or axis is None or any(not s.has(axis) for s in ins):
            return None
        base = ins[0]
        for s in ins[1:]:
            if s.names() != base.names():
                return None
            for n in base.names():
                if n != axis and s.size(n) != base.size(n):
                    return None
        total = sum(s.size(axis) for s in ins)
        dims = tuple((n, total if n == axis else sz) for n, sz in base.dims)
        return TensorShape(dims, out.element_size)
    return None


def _check_shape(s: TensorShape, where: str, report: ValidationReport):
    names = s.names()
    if len(set(names)) != len(names):
        report.add(f"{where}: repeated dimension names {names}")
    if "sample" not in names:
        report.add(f"{where}: missing required sample dimension")
    for n, sz in s.dims:
        if n not in DIM_NAMES:
            report.add(f"{where}: unknown dimension name '{n}'")
        if sz < 1:
            report.add(f"{where}: dimension {n} has non-positive size {sz}")
    if s.element_size < 1:
        report.add(f"{where}: non-positive element size {s.element_size}")


def _check_kind(op: Operation, report: ValidationReport):
    kind = op.kind
    if kind.tag not in KIND_TAGS:
        report.add(f"op {op.id}: unknown operator kind: {kind.tag}")
        return
    if kind.tag in ("Conv1D", "Conv2D", "Pool1D", "Pool2D"):
        kernels, strides = _kernel_strides(kind)
        for v in kernels + strides:
            if not isinstance(v, int) or v < 1:
                report.add(f"op {op.id}: kernel/stride must be positive integers, got {v}")
        if kind.hp("padding", "same") not in PADDINGS:
            report.add(f"op {op.id}: padding must be one of {PADDINGS}")
    if kind.tag == "Embedding" and kind.hp("vocab_size", 1) < 1:
        report.add(f"op {op.id}: vocab_size must be >= 1")
    if kind.tag == "Concat" and kind.hp("axis") is None:
        report.add(f"op {op.id}: Concat requires an axis hyperparameter")


def validate_graph(g: OperatorGraph) -> ValidationReport:
    """Structural validation; returns every violation rather than raising."""
    report = ValidationReport()
    for op in g.ops.values():
        _check_shape(op.output_shape, f"op {op.id} output", report)
        for i, s in enumerate(op.input_shapes):
            _check_shape(s, f"op {op.id} input {i}", report)
        _check_kind(op, report)
        if op.param_bytes < 0:
            report.add(f"op {op.id}: negative param_bytes {op.param_bytes}")
        if op.kind.tag in KIND_TAGS:
            want = expected_output_shape(op)
            if want is None:
                report.add(f"op {op.id}: input shapes unusable for kind {op.kind.tag}")
            elif want.dims != op.output_shape.dims:
                report.add(
                    f"op {op.id}: output shape {op.output_shape.dims} inconsistent "
                    f"with kind {op.kind.tag} (expected {want.dims})"
                )
    seen_slots: set[tuple[str, int]] = set()
    for e in g.tensors:
        if e.src not in g.ops or e.dst not in g.ops:
            report.add(f"dangling edge: {e.src} -> {e.dst}")
            continue
        if e.shape != g.ops[e.src].output_shape:
            report.add(f"edge {e.src} -> {e.dst}: shape differs from source output shape")
        dst = g.ops[e.dst]
        if not (0 <= e.dst_slot < len(dst.input_shapes)):
            report.add(f"edge {e.src} -> {e.dst}: input slot {e.dst_slot} out of range")
        elif dst.input_shapes[e.dst_slot].dims != e.shape.dims:
            report.add(
                f"edge {e.src} -> {e.dst}: slot {e.dst_slot} expects "
                f"{dst.input_shapes[e.dst_slot].dims}, edge carries {e.shape.dims}"
            )
        if (e.dst, e.dst_slot) in seen_slots:
            report.add(f"op {e.dst}: input slot {e.dst_slot} fed by multiple edges")
        seen_slots.add((e.dst, e.dst_slot))
    try:
        g.topological_order()
    except ValueError:
        report.add("cycle detected")
    return report


def validate_topology(t: DeviceTopology) -> ValidationReport:
    report = ValidationReport()
    seen_pairs: set[tuple[str, str]] = set()
    for c in t.connections:
        for end in (c.a, c.b):
            if end not in t.devices:
                report.add(f"connection {c.a} -- {c.b}: unknown device {end}")
        if c.a == c.b:
            report.add(f"connection {c.a} -- {c.b}: endpoints must differ")
        if c.key() in seen_pairs:
            report.add(f"connection {c.a} -- {c.b}: duplicate connection for pair")
        seen_pairs.add(c.key())
        if c.bandwidth <= 0:
            report.add(f"connection {c.a} -- {c.b}: bandwidth must be positive, got {c.bandwidth}")
        if c.latency < 0:
            report.add(f"connection {c.a} -- {c.b}: negative latency {c.latency}")
    return report
