"""Cost model: analytic fallback, cache behavior, profile file format."""

import random

import pytest

from parasim import (
    AnalyticCostModel,
    Connection,
    CostProfile,
    MODE_FORWARD,
    ProfileFormatError,
    build_task_graph,
    comm_time,
    cost_digest,
    cost_key_for,
    dumps_profile,
    full_simulate,
    loads_profile,
    merge_profiles,
    random_strategy,
    region,
    shape,
    Operation,
    OperatorKind,
)
from parasim.models import single_node_topology
from helpers import random_graph, random_topology


def _mm(sample, cin, cout, name="mm"):
    return Operation(
        name, OperatorKind("MatMul"),
        (shape(("sample", sample), ("channel", cin)),),
        shape(("sample", sample), ("channel", cout)),
        param_bytes=cin * cout * 4,
    )


def test_analytic_matmul_time():
    """2 * features * output elements FLOPs at the default 1e12 FLOP/s."""
    op = _mm(32, 1024, 1024)
    profile = CostProfile()
    dev = single_node_topology(gpus=1).devices["gpu00"]
    t = profile.task_exe_time(op, region(("sample", 0, 32), ("channel", 0, 1024)), dev)
    assert t == 2.0 * 1024 * (32 * 1024) / 1e12  # 6.7108864e-05


def test_analytic_region_scaling():
    op = _mm(32, 64, 64)
    model = AnalyticCostModel()
    dev = single_node_topology(gpus=1).devices["gpu00"]
    full = CostProfile(fallback=model).task_exe_time(
        op, region(("sample", 0, 32), ("channel", 0, 64)), dev)
    half = CostProfile(fallback=model).task_exe_time(
        op, region(("sample", 0, 16), ("channel", 0, 64)), dev)
    assert half == full / 2


def test_analytic_throughput_and_overhead():
    model = AnalyticCostModel(throughput={"gpu": 2e12}, overhead=1e-6)
    op = _mm(4, 8, 8)
    key = cost_key_for(op, region(("sample", 0, 4), ("channel", 0, 8)), "gpu")
    assert model.time(op, key) == 2.0 * 8 * 32 / 2e12 + 1e-6
    other = cost_key_for(op, region(("sample", 0, 4), ("channel", 0, 8)), "cpu")
    assert model.time(op, other) == 2.0 * 8 * 32 / 1e12 + 1e-6  # default rate


def test_digest_separates_equal_output_shapes():
    """Same output, different inner dimension: the cost key must differ."""
    a = _mm(8, 16, 8, "a")
    b = _mm(8, 32, 8, "b")
    assert a.output_shape == b.output_shape
    assert cost_digest(a) != cost_digest(b)
    out = region(("sample", 0, 8), ("channel", 0, 8))
    assert cost_key_for(a, out, "gpu") != cost_key_for(b, out, "gpu")


def test_exe_time_deterministic_and_cached():
    op = _mm(8, 16, 8)
    dev = single_node_topology(gpus=1).devices["gpu00"]
    out = region(("sample", 0, 8), ("channel", 0, 8))
    p = CostProfile()
    t1 = p.task_exe_time(op, out, dev)
    assert p.fallback_evaluations == 1
    t2 = p.task_exe_time(op, out, dev)
    assert p.fallback_evaluations == 1  # cache hit, no second model call
    assert t1 == t2
    assert CostProfile().task_exe_time(op, out, dev) == t1


def test_cache_transparency():
    """Warm and cold caches give bit-identical simulations."""
    rng = random.Random(5)
    g = random_graph(rng)
    topo = random_topology(rng, 4)
    s = random_strategy(g, topo, 4, 0)
    cold = CostProfile()
    r1 = full_simulate(build_task_graph(g, topo, s, cold, MODE_FORWARD))
    r2 = full_simulate(build_task_graph(g, topo, s, cold, MODE_FORWARD))  # warm
    assert r1.makespan == r2.makespan
    assert r1.device_busy == r2.device_busy


def test_comm_time():
    conn = Connection("a", "b", 1e9, 1e-3)
    assert comm_time(conn, 4_000_000) == 1e-3 + 4e-3
    assert comm_time(conn, 0) == 1e-3
    # nondecreasing in bytes, nonincreasing in bandwidth
    fast = Connection("a", "b", 2e9, 1e-3)
    for nbytes in (0, 1, 10_000, 4_000_000):
        assert comm_time(conn, nbytes) <= comm_time(conn, nbytes + 1)
        assert comm_time(fast, nbytes) <= comm_time(conn, nbytes)


def test_profile_round_trip():
    text = (
        "# measured times\n"
        "MatMul;0123456789ab;sample=16,channel=64;gpu;3.5e-05\n"
        "Conv2D;ba9876543210;sample=4,height=8,width=8,channel=16;gpu;0.000125\n"
    )
    p = loads_profile(text)
    assert len(p.entries) == 2
    assert loads_profile(dumps_profile(p)).entries == p.entries


def test_profile_parse_errors_name_the_line():
    with pytest.raises(ProfileFormatError, match="line 2.*5 ';'-separated"):
        loads_profile("# ok\nMatMul;abc;sample=4;gpu\n")
    with pytest.raises(ProfileFormatError, match="line 1.*name=size"):
        loads_profile("MatMul;abc;sample4;gpu;1e-5\n")
    with pytest.raises(ProfileFormatError, match="line 1.*not an integer"):
        loads_profile("MatMul;abc;sample=x;gpu;1e-5\n")
    with pytest.raises(ProfileFormatError, match="line 3.*not a number"):
        loads_profile("\n\nMatMul;abc;sample=4;gpu;fast\n")
    with pytest.raises(ProfileFormatError, match="non-positive time"):
        loads_profile("MatMul;abc;sample=4;gpu;0\n")
    with pytest.raises(ProfileFormatError, match="empty field"):
        loads_profile("MatMul;;sample=4;gpu;1e-5\n")


def test_profile_overrides_fallback():
    op = _mm(8, 16, 8)
    out = region(("sample", 0, 8), ("channel", 0, 8))
    key = cost_key_for(op, out, "gpu")
    dims = ",".join(f"{n}={s}" for n, s in key.region_dims)
    p = loads_profile(f"{key.kind};{key.digest};{dims};{key.device_kind};7e-4\n")
    dev = single_node_topology(gpus=1).devices["gpu00"]
    assert p.task_exe_time(op, out, dev) == 7e-4
    assert p.fallback_evaluations == 0


def test_merge_profiles_second_wins():
    a = loads_profile("MatMul;abc;sample=4;gpu;1e-5\nConv2D;def;sample=2;gpu;2e-5\n")
    b = loads_profile("MatMul;abc;sample=4;gpu;9e-5\n")
    merged = merge_profiles(a, b)
    assert len(merged.entries) == 2
    (mm_key,) = [k for k in merged.entries if k.kind == "MatMul"]
    assert merged.entries[mm_key] == 9e-5
