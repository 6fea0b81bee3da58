"""Task graphs: per-device work units derived from a parallelization strategy.

Each operation becomes one task per output block; data that crosses devices
becomes an explicit transfer task living on the connection that carries it.
In full-iteration mode every forward task gets a mirrored backward task and
replicated parameters get a serialized ring all-reduce after the backward
pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from math import prod

from .cost import CostProfile, comm_time
from .graph import Connection, DeviceTopology, OperatorGraph, parallelizable_dims
from .partition import (
    ParallelizationConfig,
    ParallelizationStrategy,
    _block_ranges,
    _grid,
    _input_needs,
    output_region,
)

__all__ = [
    "MODE_FORWARD",
    "MODE_FULL",
    "Task",
    "TimelineEntry",
    "TaskGraph",
    "NoRouteError",
    "build_task_graph",
    "update_task_graph",
    "link_device_id",
    "timeline_table",
    "structure_table",
    "export_dot",
]

MODE_FORWARD = "forward"
MODE_FULL = "full-iteration"

NOTREADY, READY, COMPLETE = "NOTREADY", "READY", "COMPLETE"


def link_device_id(conn: Connection) -> str:
    a, b = conn.key()
    return f"link:{a}|{b}"


class NoRouteError(RuntimeError):
    pass


@dataclass(slots=True)
class Task:
    id: int
    kind: str  # "normal" | "comm"
    device: str  # device id, or link id for comm tasks
    exe_time: float
    origin: tuple  # stable identity across rebuilds, e.g. ("op", op_id, k)
    op_id: str | None = None
    task_index: int = 0
    nbytes: float = 0.0  # comm payload
    inputs: set = field(default_factory=set)  # predecessor task ids
    outputs: set = field(default_factory=set)  # successor task ids


@dataclass(slots=True)
class TimelineEntry:
    ready: float = 0.0
    start: float = 0.0
    end: float = 0.0
    state: str = NOTREADY


class TaskGraph:
    """Mutable task graph plus (after simulation) its timeline.

    ``device_order`` lists each device's tasks in execution (FIFO) order,
    which for this scheduling discipline is ascending (readyTime, origin);
    ``device_keys`` mirrors it with the (readyTime, origin) sort keys so
    queue positions can be bisected without a Python-level key function.
    """

    def __init__(self, graph: OperatorGraph, topology: DeviceTopology,
                 strategy: ParallelizationStrategy, profile: CostProfile, mode: str):
        self.graph = graph
        self.topology = topology
        self.strategy = strategy
        self.profile = profile
        self.mode = mode
        self.tasks: dict[int, Task] = {}
        self.timeline: dict[int, TimelineEntry] = {}
        self.device_order: dict[str, list[int]] = {}
        self.device_keys: dict[str, list] = {}
        self.simulated = False
        self._next_id = 0
        # running aggregates over the task set (maintained through updates so
        # result assembly never rescans every task)
        self.device_busy: dict[str, float] = {dev: 0.0 for dev in topology.devices}
        self.total_comm_bytes = 0.0
        # indexes used by incremental updates
        self.op_tasks: dict[str, list[int]] = {}  # forward tasks, grid order
        self.op_bwd: dict[str, list[int]] = {}
        self.edge_comm: dict[tuple[str, str], list[int]] = {}
        self.edge_comm_bwd: dict[tuple[str, str], list[int]] = {}
        self.sync_tasks: dict[str, list[int]] = {}

    # -- construction ------------------------------------------------------

    def _new_task(self, kind, device, exe_time, origin, op_id=None, task_index=0, nbytes=0.0) -> Task:
        t = Task(self._next_id, kind, device, exe_time, origin, op_id, task_index, nbytes)
        self._next_id += 1
        self.tasks[t.id] = t
        self.device_busy[device] = self.device_busy.get(device, 0.0) + exe_time
        if kind == "comm":
            self.total_comm_bytes += nbytes
        return t

    def _link(self, a: int, b: int):
        self.tasks[a].outputs.add(b)
        self.tasks[b].inputs.add(a)

    def _make_op_tasks(self, op_id: str):
        op = self.graph.ops[op_id]
        cfg = self.strategy.configs[op_id]
        ids = []
        for k in range(cfg.size()):
            region = output_region(op, cfg, k)
            device = self.topology.devices[cfg.assignment[k]]
            exe = self.profile.task_exe_time(op, region, device)
            ids.append(self._new_task("normal", device.id, exe, ("op", op_id, k), op_id, k).id)
        self.op_tasks[op_id] = ids
        if self.mode == MODE_FULL:
            mult = self.profile.backward_multiplier
            bids = []
            for k, fid in enumerate(ids):
                f = self.tasks[fid]
                b = self._new_task("normal", f.device, f.exe_time * mult,
                                   ("op_bwd", op_id, k), op_id, k)
                self._link(fid, b.id)  # activations precede the backward pass
                bids.append(b.id)
            self.op_bwd[op_id] = bids

    def _connection_or_fail(self, a: str, b: str) -> Connection:
        conn = self.topology.connection_between(a, b)
        if conn is None:
            raise NoRouteError(f"no route between device {a} and device {b}")
        return conn

    def _wire_pair(self, src_id: str, dst_id: str) -> set[int]:
        """Dependencies/transfers for all tensors flowing src_id -> dst_id.

        Disjoint shared sub-tensors between one task pair (possible with
        parallel edges) merge into a single transfer with summed bytes.
        Returns surviving tasks whose input-set changed (used by updates).
        """
        g = self.graph
        src_op, dst_op = g.ops[src_id], g.ops[dst_id]
        edges = [e for e in g.tensors if e.src == src_id and e.dst == dst_id]
        s_names, s_sizes, s_degs = _grid(src_op, self.strategy.configs[src_id])
        d_names, d_sizes, d_degs = _grid(dst_op, self.strategy.configs[dst_id])
        esize = src_op.output_shape.element_size
        pair_bytes: dict[tuple[int, int], int] = {}
        for l in range(prod(d_degs)):
            rng = dict(zip(d_names, _block_ranges(d_sizes, d_degs, l)))
            needs = dict(_input_needs(dst_op, rng))
            for e in edges:
                need = needs.get(e.dst_slot)
                if need is None:
                    continue
                per_dim = []
                for size, deg, name in zip(s_sizes, s_degs, s_names):
                    lo, hi = need[name]
                    lo, hi = max(0, lo), min(size, hi)
                    if lo >= hi:
                        per_dim = None
                        break
                    block = size // deg
                    per_dim.append([
                        (c, min(hi, (c + 1) * block) - max(lo, c * block))
                        for c in range(lo // block, (hi - 1) // block + 1)
                    ])
                if per_dim is None:
                    continue
                for combo in product(*per_dim):
                    k, elems = 0, esize
                    for (c, ln), deg in zip(combo, s_degs):
                        k = k * deg + c
                        elems *= ln
                    key = (k, l)
                    pair_bytes[key] = pair_bytes.get(key, 0) + elems
        touched: set[int] = set()
        src_tasks, dst_tasks = self.op_tasks[src_id], self.op_tasks[dst_id]
        full = self.mode == MODE_FULL
        for (k, l), nbytes in sorted(pair_bytes.items()):
            a, b = self.tasks[src_tasks[k]], self.tasks[dst_tasks[l]]
            if a.device == b.device:
                self._link(a.id, b.id)
                touched.add(b.id)
                if full:
                    self._link(self.op_bwd[dst_id][l], self.op_bwd[src_id][k])
                    touched.add(self.op_bwd[src_id][k])
                continue
            conn = self._connection_or_fail(a.device, b.device)
            ct = self._new_task("comm", link_device_id(conn), comm_time(conn, nbytes),
                                ("edge", src_id, dst_id, k, l), nbytes=nbytes)
            self.edge_comm.setdefault((src_id, dst_id), []).append(ct.id)
            self._link(a.id, ct.id)
            self._link(ct.id, b.id)
            touched.add(b.id)
            if full:
                bt = self._new_task("comm", ct.device, ct.exe_time,
                                    ("edge_bwd", src_id, dst_id, k, l), nbytes=nbytes)
                self.edge_comm_bwd.setdefault((src_id, dst_id), []).append(bt.id)
                self._link(self.op_bwd[dst_id][l], bt.id)
                self._link(bt.id, self.op_bwd[src_id][k])
                touched.add(self.op_bwd[src_id][k])
        return touched

    def _sync_op(self, op_id: str):
        """Ring all-reduce for every replicated parameter shard of op_id.

        A shard held by r > 1 distinct devices costs 2(r-1) serialized
        transfers of shard_bytes / r, hopping around the ring of holders.
        """
        op = self.graph.ops[op_id]
        if self.mode != MODE_FULL or op.param_bytes <= 0:
            return
        cfg = self.strategy.configs[op_id]
        names, _, degs = _grid(op, cfg)
        classes = parallelizable_dims(op)
        param_pos = [i for i, n in enumerate(names) if classes.get(n) == "parameter"]
        groups: dict[tuple, list[int]] = {}
        for k, tid in enumerate(self.op_bwd[op_id]):
            coords, rem = [], k
            for d in reversed(degs):
                coords.append(rem % d)
                rem //= d
            coords.reverse()
            groups.setdefault(tuple(coords[i] for i in param_pos), []).append(tid)
        shard_bytes = op.param_bytes / (prod(degs[i] for i in param_pos) or 1)
        out = []
        for si, key in enumerate(sorted(groups)):
            members = groups[key]
            ring = sorted({self.tasks[t].device for t in members})
            r = len(ring)
            if r < 2:
                continue
            per_hop = shard_bytes / r
            prev = None
            for hop in range(2 * (r - 1)):
                conn = self._connection_or_fail(ring[hop % r], ring[(hop + 1) % r])
                ct = self._new_task("comm", link_device_id(conn), comm_time(conn, per_hop),
                                    ("sync", op_id, si, hop), nbytes=per_hop)
                if prev is None:
                    for m in members:
                        self._link(m, ct.id)
                else:
                    self._link(prev, ct.id)
                prev = ct.id
                out.append(ct.id)
        self.sync_tasks[op_id] = out

    # -- queries -----------------------------------------------------------

    def device_ids(self) -> list[str]:
        ids = set(self.topology.devices)
        ids.update(t.device for t in self.tasks.values())
        return sorted(ids)


def build_task_graph(g: OperatorGraph, topo: DeviceTopology,
                     strategy: ParallelizationStrategy, profile: CostProfile,
                     mode: str = MODE_FORWARD) -> TaskGraph:
    """Materialize the strategy: one task per output block, transfers included."""
    tg = TaskGraph(g, topo, strategy.copy(), profile, mode)
    order = g.topological_order()
    for op_id in order:
        tg._make_op_tasks(op_id)
    seen = set()
    for e in g.tensors:
        pair = (e.src, e.dst)
        if pair not in seen:
            seen.add(pair)
            tg._wire_pair(*pair)
    for op_id in order:
        tg._sync_op(op_id)
    return tg


def _insert_in_order(tg: TaskGraph, tid: int) -> int:
    """Place tid into its device's execution order; returns its position."""
    from bisect import bisect_left

    dev = tg.tasks[tid].device
    lst = tg.device_order.setdefault(dev, [])
    keys = tg.device_keys.setdefault(dev, [])
    probe = (tg.timeline[tid].ready, tg.tasks[tid].origin)
    idx = bisect_left(keys, probe)
    lst.insert(idx, tid)
    keys.insert(idx, probe)
    return idx


def update_task_graph(tg: TaskGraph, g: OperatorGraph, topo: DeviceTopology,
                      op_id: str, new_config: ParallelizationConfig):
    """Swap one operation's config in place; untouched tasks keep identity.

    Returns (tg, changed) where changed lists every task whose input-set or
    exeTime changed plus the queue survivors positioned after removed or
    inserted tasks (their start times can shift even though their inputs
    did not).  A no-op swap returns an empty list.
    """
    cur = tg.strategy.configs[op_id]
    if cur.degrees == new_config.degrees and cur.assignment == new_config.assignment:
        return tg, []
    full = tg.mode == MODE_FULL
    doomed = set(tg.op_tasks[op_id])
    doomed.update(tg.op_bwd.get(op_id, []))
    preds = g.predecessors(op_id)
    succs = g.successors(op_id)
    for p in preds:
        doomed.update(tg.edge_comm.pop((p, op_id), []))
        doomed.update(tg.edge_comm_bwd.pop((p, op_id), []))
    for s in succs:
        doomed.update(tg.edge_comm.pop((op_id, s), []))
        doomed.update(tg.edge_comm_bwd.pop((op_id, s), []))
    doomed.update(tg.sync_tasks.pop(op_id, []))

    changed: set[int] = set()
    if tg.simulated:
        # Survivors right after a removed run inherit a new queue predecessor.
        affected_devices = {tg.tasks[t].device for t in doomed}
        for dev in affected_devices:
            lst = tg.device_order.get(dev, [])
            keys = tg.device_keys.get(dev, [])
            after_removed = False
            kept = []
            kept_keys = []
            for tid, k in zip(lst, keys):
                if tid in doomed:
                    after_removed = True
                else:
                    if after_removed:
                        changed.add(tid)
                        after_removed = False
                    kept.append(tid)
                    kept_keys.append(k)
            tg.device_order[dev] = kept
            tg.device_keys[dev] = kept_keys

    for tid in doomed:
        t = tg.tasks[tid]
        for p in t.inputs:
            if p not in doomed:
                tg.tasks[p].outputs.discard(tid)
        for s in t.outputs:
            if s not in doomed:
                tg.tasks[s].inputs.discard(tid)
                changed.add(s)
        tg.device_busy[t.device] -= t.exe_time
        if t.kind == "comm":
            tg.total_comm_bytes -= t.nbytes
        del tg.tasks[tid]
        tg.timeline.pop(tid, None)
    tg.op_tasks.pop(op_id, None)
    tg.op_bwd.pop(op_id, None)

    tg.strategy.configs[op_id] = ParallelizationConfig(
        dict(new_config.degrees),
        tuple(new_config.assignment) if new_config.assignment is not None else None,
    )
    first_new = tg._next_id
    tg._make_op_tasks(op_id)
    for p in preds:
        changed |= tg._wire_pair(p, op_id)
    for s in succs:
        changed |= tg._wire_pair(op_id, s)
    tg._sync_op(op_id)
    new_ids = [tid for tid in range(first_new, tg._next_id) if tid in tg.tasks]
    changed.update(new_ids)
    changed -= doomed

    if tg.simulated:
        # Provisional times so new tasks can join the device queues; the
        # delta pass re-derives them and repairs everything downstream.
        new_set = set(new_ids)
        indeg = {tid: sum(1 for p in tg.tasks[tid].inputs if p in new_set) for tid in new_ids}
        queue = sorted(tid for tid in new_ids if indeg[tid] == 0)
        pos = 0
        while pos < len(queue):
            tid = queue[pos]
            pos += 1
            t = tg.tasks[tid]
            ready = 0.0
            for p in t.inputs:
                pe = tg.timeline[p].end
                if pe > ready:
                    ready = pe
            entry = TimelineEntry(ready=ready, state=COMPLETE)
            tg.timeline[tid] = entry
            lst = tg.device_order.setdefault(t.device, [])
            i = _insert_in_order(tg, tid)
            if i + 1 < len(lst) and lst[i + 1] not in new_set:
                changed.add(lst[i + 1])
            prev_end = tg.timeline[lst[i - 1]].end if i > 0 else 0.0
            entry.start = max(ready, prev_end)
            entry.end = entry.start + t.exe_time
            for s in t.outputs:
                if s in new_set:
                    indeg[s] -= 1
                    if indeg[s] == 0:
                        queue.append(s)
    return tg, sorted(changed)


# ---------------------------------------------------------------------------
# canonical views (testing, delta verification, export)

def timeline_table(tg: TaskGraph) -> dict:
    """Origin-keyed (start, end, device) triples; comparable across rebuilds."""
    return {
        t.origin: (tg.timeline[tid].start, tg.timeline[tid].end, t.device)
        for tid, t in tg.tasks.items()
    }


def structure_table(tg: TaskGraph) -> list:
    """Canonical structural form, independent of task ids."""
    by_id = {tid: t.origin for tid, t in tg.tasks.items()}
    rows = []
    for tid in sorted(tg.tasks):
        t = tg.tasks[tid]
        rows.append((
            t.origin, t.device, t.exe_time, t.nbytes,
            tuple(sorted(by_id[p] for p in t.inputs)),
        ))
    rows.sort(key=lambda r: repr(r[0]))
    return rows


def export_dot(tg: TaskGraph) -> str:
    """Graphviz rendering; comm tasks are drawn as boxes."""
    lines = ["digraph taskgraph {"]
    for tid in sorted(tg.tasks):
        t = tg.tasks[tid]
        label = ":".join(str(x) for x in t.origin) + f"\\n{t.device}\\n{t.exe_time:.3g}s"
        shapeattr = ' shape=box' if t.kind == "comm" else ""
        lines.append(f'  t{tid} [label="{label}"{shapeattr}];')
    for tid in sorted(tg.tasks):
        for s in sorted(tg.tasks[tid].outputs):
            lines.append(f"  t{tid} -> t{s};")
    lines.append("}")
    return "\n".join(lines)
