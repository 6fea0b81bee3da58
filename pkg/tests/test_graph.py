"""Core model: shapes, operator kinds, graph structure, validation."""

import random

import pytest

from parasim import (
    Connection,
    DeviceTopology,
    MODEL_GENERATORS,
    Operation,
    OperatorGraph,
    OperatorKind,
    conv_out_size,
    expected_output_shape,
    graph_from_json,
    graph_to_json,
    pad_before,
    parallelizable_dims,
    shape,
    validate_graph,
    validate_topology,
)
from helpers import random_graph


def test_shape_accessors():
    s = shape(("sample", 4), ("channel", 8), element_size=2)
    assert s.names() == ("sample", "channel")
    assert s.sizes() == (4, 8)
    assert s.size("channel") == 8
    assert s.has("sample") and not s.has("width")
    assert s.volume() == 32
    assert s.nbytes() == 64
    with pytest.raises(KeyError):
        s.size("height")


def test_conv_out_size():
    assert conv_out_size(8, 3, 1, "same") == 8
    assert conv_out_size(8, 3, 1, "valid") == 6
    assert conv_out_size(8, 3, 2, "same") == 4
    assert conv_out_size(8, 2, 2, "valid") == 4
    assert conv_out_size(7, 3, 2, "same") == 4  # ceil(7/2)


def test_pad_before():
    assert pad_before(8, 3, 1, "same") == 1
    assert pad_before(8, 3, 1, "valid") == 0
    assert pad_before(8, 2, 2, "same") == 0  # even kernel, exact cover


def test_duplicate_op_id_rejected():
    g = OperatorGraph()
    op = Operation("a", OperatorKind("ElementWise"), (shape(("sample", 2)),),
                   shape(("sample", 2)))
    g.add_op(op)
    with pytest.raises(ValueError, match="duplicate"):
        g.add_op(op)


def _ew(name, srcs=()):
    s = shape(("sample", 2))
    return Operation(name, OperatorKind("ElementWise"), (s,) * max(1, len(srcs)), s)


def test_topological_order():
    g = OperatorGraph()
    for n in ("a", "b", "c"):
        g.add_op(_ew(n))
    g.add_tensor("a", "b")
    g.add_tensor("b", "c")
    assert g.topological_order() == ["a", "b", "c"]
    assert g.predecessors("c") == ["b"]
    assert g.successors("a") == ["b"]


def test_cycle_raises_and_is_reported():
    g = OperatorGraph()
    g.add_op(_ew("a"))
    g.add_op(_ew("b"))
    g.add_tensor("a", "b")
    g.add_tensor("b", "a")
    with pytest.raises(ValueError):
        g.topological_order()
    rep = validate_graph(g)
    assert any("cycle" in issue for issue in rep.issues)


def test_dimension_classes_by_kind():
    mm = Operation("mm", OperatorKind("MatMul"),
                   (shape(("sample", 4), ("channel", 8)),),
                   shape(("sample", 4), ("channel", 16)), param_bytes=512)
    assert parallelizable_dims(mm) == {"sample": "sample", "channel": "parameter"}

    conv = Operation("cv", OperatorKind("Conv2D", {
        "kernel_h": 3, "kernel_w": 3, "stride_h": 1, "stride_w": 1, "padding": "same"}),
        (shape(("sample", 2), ("height", 8), ("width", 8), ("channel", 2)),),
        shape(("sample", 2), ("height", 8), ("width", 8), ("channel", 4)),
        param_bytes=288)
    assert parallelizable_dims(conv) == {
        "sample": "sample", "height": "attribute", "width": "attribute",
        "channel": "parameter",
    }

    pool = Operation("pl", OperatorKind("Pool2D", {
        "kernel_h": 2, "kernel_w": 2, "stride_h": 2, "stride_w": 2, "padding": "valid"}),
        (shape(("sample", 2), ("height", 8), ("width", 8), ("channel", 4)),),
        shape(("sample", 2), ("height", 4), ("width", 4), ("channel", 4)))
    assert parallelizable_dims(pool) == {
        "sample": "sample", "height": "attribute", "width": "attribute",
        "channel": "attribute",
    }

    emb = Operation("em", OperatorKind("Embedding", {"vocab_size": 16}),
                    (shape(("sample", 4)),),
                    shape(("sample", 4), ("channel", 8)), param_bytes=512)
    assert parallelizable_dims(emb) == {"sample": "sample", "channel": "parameter"}


def test_dimension_class_properties_on_random_graphs():
    """Every op: exactly one sample-class dim; pooling never splits parameters."""
    for seed in range(30):
        g = random_graph(random.Random(seed))
        for op in g.ops.values():
            classes = parallelizable_dims(op)
            assert list(classes.values()).count("sample") == 1
            if op.kind.tag.startswith("Pool"):
                assert "parameter" not in classes.values()
            if op.kind.tag in ("MatMul", "Conv1D", "Conv2D") and "channel" in classes:
                assert classes["channel"] == "parameter"


def test_expected_output_shape():
    conv = Operation("cv", OperatorKind("Conv2D", {
        "kernel_h": 3, "kernel_w": 3, "stride_h": 2, "stride_w": 2, "padding": "same"}),
        (shape(("sample", 2), ("height", 8), ("width", 8), ("channel", 2)),),
        shape(("sample", 2), ("height", 4), ("width", 4), ("channel", 4)))
    assert expected_output_shape(conv) == conv.output_shape

    bad = Operation("cv2", conv.kind, conv.input_shapes,
                    shape(("sample", 2), ("height", 5), ("width", 4), ("channel", 4)))
    want = expected_output_shape(bad)
    assert want is not None and want.dims != bad.output_shape.dims
    g = OperatorGraph()
    g.add_op(bad)
    rep = validate_graph(g)
    assert any("inconsistent" in issue for issue in rep.issues)


def test_validate_graph_edge_issues():
    g = OperatorGraph()
    g.add_op(_ew("a"))
    g.add_op(_ew("b"))
    g.add_tensor("a", "b")
    g.add_tensor("a", "b")  # second edge into the same slot
    rep = validate_graph(g)
    assert any("fed by multiple edges" in issue for issue in rep.issues)

    g2 = OperatorGraph()
    g2.add_op(_ew("a"))
    g2.add_tensor("a", "ghost")
    assert any("dangling" in issue for issue in validate_graph(g2).issues)


def test_generator_fixtures_validate():
    for name, gen in MODEL_GENERATORS.items():
        rep = validate_graph(gen())
        assert rep.ok, (name, rep.issues)


def test_validation_survives_round_trip():
    for seed in range(20):
        g = random_graph(random.Random(seed))
        assert validate_graph(g).ok
        g2 = graph_from_json(graph_to_json(g))
        assert validate_graph(g2).ok
        assert graph_to_json(g2) == graph_to_json(g)


def test_validate_topology_flags_bad_links():
    topo = DeviceTopology()
    topo.add_device("a")
    topo.add_device("b")
    topo.add_connection("a", "b", 1e9, 1e-6)
    assert validate_topology(topo).ok

    topo.connections.append(Connection("a", "ghost", 1e9))
    topo.connections.append(Connection("a", "a", 1e9))
    topo.connections.append(Connection("b", "a", -5.0, -1.0))
    issues = "\n".join(validate_topology(topo).issues)
    assert "unknown device ghost" in issues
    assert "endpoints must differ" in issues
    assert "duplicate connection" in issues
    assert "bandwidth must be positive" in issues
    assert "negative latency" in issues
