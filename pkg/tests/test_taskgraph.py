"""Task-graph construction: compute tasks, transfers, sync rings, updates."""

import random

import pytest

from parasim import (
    CostProfile,
    DeviceTopology,
    MODE_FORWARD,
    MODE_FULL,
    NoRouteError,
    Operation,
    OperatorGraph,
    OperatorKind,
    ParallelizationConfig,
    ParallelizationStrategy,
    build_task_graph,
    comm_time,
    delta_simulate,
    enumerate_configs,
    export_dot,
    full_simulate,
    input_regions,
    output_region,
    random_strategy,
    shape,
    structure_table,
    update_task_graph,
)
from parasim.models import single_node_topology
from helpers import random_graph, random_topology


def _two_matmuls():
    g = OperatorGraph()
    g.add_op(Operation("a", OperatorKind("MatMul"),
                       (shape(("sample", 4), ("channel", 8)),),
                       shape(("sample", 4), ("channel", 8)), param_bytes=256))
    g.add_op(Operation("b", OperatorKind("MatMul"),
                       (shape(("sample", 4), ("channel", 8)),),
                       shape(("sample", 4), ("channel", 4)), param_bytes=128))
    g.add_tensor("a", "b")
    return g


def _strategy(devices_a, devices_b):
    return ParallelizationStrategy({
        "a": ParallelizationConfig({"sample": len(devices_a), "channel": 1}, devices_a),
        "b": ParallelizationConfig({"sample": len(devices_b), "channel": 1}, devices_b),
    })


def test_chain_on_one_device_needs_no_comm():
    g = _two_matmuls()
    topo = single_node_topology(gpus=2)
    tg = build_task_graph(g, topo, _strategy(("gpu00",), ("gpu00",)), CostProfile(),
                          MODE_FORWARD)
    assert len(tg.tasks) == 2
    assert all(t.kind == "normal" for t in tg.tasks.values())
    (a_id,) = tg.op_tasks["a"]
    (b_id,) = tg.op_tasks["b"]
    assert tg.tasks[b_id].inputs == {a_id}


def test_cross_device_chain_inserts_transfer():
    g = _two_matmuls()
    topo = single_node_topology(gpus=2, bandwidth=1e9, latency=1e-6)
    tg = build_task_graph(g, topo, _strategy(("gpu00",), ("gpu01",)), CostProfile(),
                          MODE_FORWARD)
    comms = [t for t in tg.tasks.values() if t.kind == "comm"]
    assert len(comms) == 1
    ct = comms[0]
    assert ct.device == "link:gpu00|gpu01"
    assert ct.nbytes == 4 * 8 * 4  # the whole activation tensor
    conn = topo.connection_between("gpu00", "gpu01")
    assert ct.exe_time == comm_time(conn, ct.nbytes)
    (a_id,) = tg.op_tasks["a"]
    (b_id,) = tg.op_tasks["b"]
    assert ct.inputs == {a_id} and ct.outputs == {b_id}


def test_partial_overlap_transfers_only_the_intersection():
    """Producer split 2-way, consumer split 2-way but crosswise placed."""
    g = _two_matmuls()
    topo = single_node_topology(gpus=2)
    tg = build_task_graph(
        g, topo, _strategy(("gpu00", "gpu01"), ("gpu01", "gpu00")),
        CostProfile(), MODE_FORWARD)
    comms = sorted((t for t in tg.tasks.values() if t.kind == "comm"),
                   key=lambda t: t.origin)
    # each producer half feeds the consumer half on the other device
    assert [t.origin for t in comms] == [
        ("edge", "a", "b", 0, 0), ("edge", "a", "b", 1, 1)]
    assert all(t.nbytes == 2 * 8 * 4 for t in comms)  # half the samples


def test_parallel_edges_merge_into_one_transfer():
    g = OperatorGraph()
    s = shape(("sample", 4), ("channel", 4))
    g.add_op(Operation("a", OperatorKind("MatMul"),
                       (shape(("sample", 4), ("channel", 4)),), s, param_bytes=64))
    g.add_op(Operation("add", OperatorKind("ElementWise"), (s, s), s))
    g.add_tensor("a", "add", dst_slot=0)
    g.add_tensor("a", "add", dst_slot=1)
    topo = single_node_topology(gpus=2)
    strat = ParallelizationStrategy({
        "a": ParallelizationConfig({"sample": 1, "channel": 1}, ("gpu00",)),
        "add": ParallelizationConfig({n: 1 for n in s.names()}, ("gpu01",)),
    })
    tg = build_task_graph(g, topo, strat, CostProfile(), MODE_FORWARD)
    comms = [t for t in tg.tasks.values() if t.kind == "comm"]
    assert len(comms) == 1  # one task pair -> one transfer
    assert comms[0].nbytes == 2 * s.nbytes()  # both slots' bytes, summed


def _comm_oracle(g, tg):
    """Sum of cross-device intersection volumes over all tensor edges."""
    total = 0.0
    for e in g.tensors:
        src_op, dst_op = g.ops[e.src], g.ops[e.dst]
        scfg = tg.strategy.configs[e.src]
        dcfg = tg.strategy.configs[e.dst]
        for l in range(dcfg.size()):
            needs = dict(input_regions(dst_op, output_region(dst_op, dcfg, l)))
            need = needs.get(e.dst_slot)
            if need is None:
                continue
            for k in range(scfg.size()):
                inter = need.intersect(output_region(src_op, scfg, k))
                if inter is None:
                    continue
                if scfg.assignment[k] != dcfg.assignment[l]:
                    total += inter.volume_elements() * src_op.output_shape.element_size
    return total


def test_communication_conservation():
    for seed in range(12):
        rng = random.Random(seed)
        g = random_graph(rng)
        topo = random_topology(rng, rng.choice((2, 4, 8)))
        s = random_strategy(g, topo, 4, seed)
        tg = build_task_graph(g, topo, s, CostProfile(), MODE_FORWARD)
        assert tg.total_comm_bytes == _comm_oracle(g, tg)


def test_comm_tasks_never_join_same_device():
    for seed in range(8):
        rng = random.Random(100 + seed)
        g = random_graph(rng)
        topo = random_topology(rng, 4)
        tg = build_task_graph(g, topo, random_strategy(g, topo, 4, seed),
                              CostProfile(), MODE_FULL)
        for t in tg.tasks.values():
            if t.kind == "comm" and t.origin[0] in ("edge", "edge_bwd"):
                producers = {tg.tasks[p].device for p in t.inputs
                             if tg.tasks[p].kind == "normal"}
                consumers = {tg.tasks[o].device for o in t.outputs
                             if tg.tasks[o].kind == "normal"}
                assert not (producers & consumers)


def test_backward_tasks_mirror_forward():
    g = _two_matmuls()
    topo = single_node_topology(gpus=2)
    profile = CostProfile(backward_multiplier=2.5)
    tg = build_task_graph(g, topo, _strategy(("gpu00",), ("gpu01",)), profile, MODE_FULL)
    for op_id in ("a", "b"):
        (fid,), (bid,) = tg.op_tasks[op_id], tg.op_bwd[op_id]
        assert tg.tasks[bid].exe_time == tg.tasks[fid].exe_time * 2.5
        assert tg.tasks[bid].device == tg.tasks[fid].device
        assert bid in tg.tasks[fid].outputs  # activations feed the backward task
    # backward transfer mirrors the forward one in reverse
    bwd_comms = [t for t in tg.tasks.values() if t.origin[0] == "edge_bwd"]
    assert len(bwd_comms) == 1
    (b_bwd,) = tg.op_bwd["b"]
    (a_bwd,) = tg.op_bwd["a"]
    assert bwd_comms[0].inputs == {b_bwd} and bwd_comms[0].outputs == {a_bwd}


def test_forward_mode_has_no_backward_or_sync():
    g = _two_matmuls()
    topo = single_node_topology(gpus=4)
    tg = build_task_graph(g, topo, _strategy(("gpu00", "gpu01"), ("gpu02",)),
                          CostProfile(), MODE_FORWARD)
    assert not tg.op_bwd and not tg.sync_tasks
    assert all(t.origin[0] in ("op", "edge") for t in tg.tasks.values())


def test_sync_ring_task_count_and_bytes():
    """r replicas of a parameter shard cost 2(r-1) hops of shard/r bytes."""
    g = _two_matmuls()
    topo = single_node_topology(gpus=4)
    strat = ParallelizationStrategy({
        "a": ParallelizationConfig({"sample": 4, "channel": 1},
                                   ("gpu00", "gpu01", "gpu02", "gpu03")),
        "b": ParallelizationConfig({"sample": 1, "channel": 1}, ("gpu00",)),
    })
    tg = build_task_graph(g, topo, strat, CostProfile(), MODE_FULL)
    sync = [tg.tasks[t] for t in tg.sync_tasks["a"]]
    assert len(sync) == 2 * (4 - 1)
    assert all(t.nbytes == 256 / 4 for t in sync)
    assert "b" not in tg.sync_tasks or tg.sync_tasks["b"] == []  # single replica


def test_sync_groups_follow_parameter_shards():
    """channel degree 2 splits the parameters; each shard syncs its own ring."""
    g = _two_matmuls()
    topo = single_node_topology(gpus=4)
    strat = ParallelizationStrategy({
        "a": ParallelizationConfig({"sample": 2, "channel": 2},
                                   ("gpu00", "gpu01", "gpu02", "gpu03")),
        "b": ParallelizationConfig({"sample": 1, "channel": 1}, ("gpu00",)),
    })
    tg = build_task_graph(g, topo, strat, CostProfile(), MODE_FULL)
    sync = [tg.tasks[t] for t in tg.sync_tasks["a"]]
    by_shard = {}
    for t in sync:
        by_shard.setdefault(t.origin[2], []).append(t)
    assert len(by_shard) == 2  # one ring per parameter shard
    for members in by_shard.values():
        assert len(members) == 2 * (2 - 1)
        # shard is param_bytes/2, replicated twice -> per-hop bytes /2 again
        assert all(t.nbytes == 256 / 2 / 2 for t in members)


def test_missing_link_is_an_input_error():
    topo = DeviceTopology()
    for d in ("d0", "d1", "d2"):
        topo.add_device(d)
    topo.add_connection("d0", "d1", 1e9, 0.0)
    g = _two_matmuls()
    strat = _strategy(("d0",), ("d2",))
    with pytest.raises(NoRouteError, match="no route between device d0 and device d2"):
        build_task_graph(g, topo, strat, CostProfile(), MODE_FORWARD)


def test_update_noop_returns_no_changes():
    g = _two_matmuls()
    topo = single_node_topology(gpus=2)
    tg = build_task_graph(g, topo, _strategy(("gpu00",), ("gpu01",)), CostProfile(),
                          MODE_FORWARD)
    same = ParallelizationConfig(dict(tg.strategy.configs["a"].degrees),
                                 tg.strategy.configs["a"].assignment)
    _, changed = update_task_graph(tg, g, topo, "a", same)
    assert changed == []


def test_update_matches_fresh_build_structurally():
    for seed in range(10):
        rng = random.Random(seed)
        g = random_graph(rng)
        topo = random_topology(rng, rng.choice((2, 4, 8)))
        mode = rng.choice((MODE_FORWARD, MODE_FULL))
        profile = CostProfile()
        tg = build_task_graph(g, topo, random_strategy(g, topo, 4, seed), profile, mode)
        for step in range(10):
            op_id = rng.choice(sorted(g.ops))
            cfg = rng.choice(enumerate_configs(g.ops[op_id], topo, 4))
            assignment = tuple(rng.choice(topo.device_ids())
                               for _ in range(cfg.size()))
            update_task_graph(tg, g, topo, op_id,
                              ParallelizationConfig(dict(cfg.degrees), assignment))
            fresh = build_task_graph(g, topo, tg.strategy, profile, mode)
            assert structure_table(tg) == structure_table(fresh), (seed, step, op_id)


def test_device_queues_and_keys_stay_in_lockstep():
    rng = random.Random(11)
    g = random_graph(rng)
    topo = random_topology(rng, 4)
    tg = build_task_graph(g, topo, random_strategy(g, topo, 4, 2), CostProfile(),
                          MODE_FULL)
    full_simulate(tg)

    def check(t):
        assert set(t.device_order) == set(t.device_keys)
        for dev, lst in t.device_order.items():
            keys = t.device_keys[dev]
            assert keys == [(t.timeline[x].ready, t.tasks[x].origin) for x in lst]
            assert keys == sorted(keys)

    check(tg)
    for seed in range(5):
        op_id = rng.choice(sorted(g.ops))
        cfg = rng.choice(enumerate_configs(g.ops[op_id], topo, 4))
        assignment = tuple(rng.choice(topo.device_ids()) for _ in range(cfg.size()))
        _, changed = update_task_graph(tg, g, topo, op_id,
                                       ParallelizationConfig(dict(cfg.degrees), assignment))
        delta_simulate(tg, changed)
        check(tg)


def test_export_dot_smoke():
    g = _two_matmuls()
    topo = single_node_topology(gpus=2)
    tg = build_task_graph(g, topo, _strategy(("gpu00",), ("gpu01",)), CostProfile(),
                          MODE_FORWARD)
    dot = export_dot(tg)
    assert dot.startswith("digraph")
    assert "op:a:0" in dot and "shape=box" in dot and "->" in dot
