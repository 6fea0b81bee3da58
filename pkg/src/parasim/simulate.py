"""Task-graph execution simulators.

All three simulators share the same scheduling contract: devices run their
tasks first-in-first-out, a task becomes ready when its last predecessor
finishes, dispatch costs nothing, and ties on ready time break by the task's
origin tuple (stable across rebuilds, unlike the integer task id).
``full_simulate`` sweeps the whole graph; ``delta_simulate``
repairs an existing timeline after a single-operation change and must land
on the identical schedule; ``oracle_simulate`` is a structurally unrelated
event-driven implementation kept for cross-checking the other two.
"""

from __future__ import annotations

import csv
import heapq
import json
from bisect import bisect_left
from dataclasses import dataclass

from .taskgraph import COMPLETE, READY, TaskGraph, TimelineEntry

__all__ = [
    "SimulationResult",
    "SimulationError",
    "full_simulate",
    "delta_simulate",
    "oracle_simulate",
    "chrome_trace",
    "write_chrome_trace",
    "write_timeline_csv",
]


class SimulationError(RuntimeError):
    pass


@dataclass
class SimulationResult:
    """Timeline plus summary aggregates.

    ``device_busy`` and ``total_comm_bytes`` are running totals maintained
    through incremental graph updates, so after many config swaps they can
    drift from a fresh build's sums by float rounding (the timeline and
    makespan stay exact).
    """

    makespan: float
    timeline: dict  # task id -> TimelineEntry (shared with the task graph)
    device_busy: dict  # device id -> seconds of occupied time
    total_comm_bytes: float


def _result(tg: TaskGraph) -> SimulationResult:
    # Along one FIFO queue each start is >= the previous end, so ends are
    # nondecreasing and the makespan is the max over the queues' last tasks.
    makespan = 0.0
    tl = tg.timeline
    for lst in tg.device_order.values():
        if lst:
            end = tl[lst[-1]].end
            if end > makespan:
                makespan = end
    return SimulationResult(makespan, tl, dict(tg.device_busy), tg.total_comm_bytes)


def full_simulate(tg: TaskGraph) -> SimulationResult:
    """Simulate the whole graph from scratch.

    Dequeues ready tasks in (readyTime, origin) order; a task starts at
    max(its ready time, its device's previous finish).
    """
    tl: dict[int, TimelineEntry] = {}
    remaining: dict[int, int] = {}
    heap = []
    for tid, t in tg.tasks.items():
        tl[tid] = TimelineEntry()
        remaining[tid] = len(t.inputs)
        if not t.inputs:
            tl[tid].state = READY
            heap.append((0.0, t.origin, tid))
    heapq.heapify(heap)
    device_last: dict[str, int] = {}
    order: dict[str, list[int]] = {}
    keys: dict[str, list] = {}
    done = 0
    while heap:
        ready, origin, tid = heapq.heappop(heap)
        t = tg.tasks[tid]
        e = tl[tid]
        last = device_last.get(t.device)
        start = ready if last is None else max(ready, tl[last].end)
        e.ready, e.start, e.end = ready, start, start + t.exe_time
        e.state = COMPLETE
        device_last[t.device] = tid
        order.setdefault(t.device, []).append(tid)
        keys.setdefault(t.device, []).append((ready, origin))
        done += 1
        for s in t.outputs:
            se = tl[s]
            if e.end > se.ready:
                se.ready = e.end
            remaining[s] -= 1
            if remaining[s] == 0:
                se.state = READY
                heapq.heappush(heap, (se.ready, tg.tasks[s].origin, s))
    if done != len(tg.tasks):
        stuck = next(tid for tid in sorted(tg.tasks) if tl[tid].state != COMPLETE)
        raise SimulationError(
            f"task {tg.tasks[stuck].origin} never became ready (cycle or broken dependency)"
        )
    tg.timeline = tl
    tg.device_order = order
    tg.device_keys = keys
    tg.simulated = True
    return _result(tg)


def delta_simulate(tg: TaskGraph, changed: list[int]) -> SimulationResult:
    """Repair the timeline after update_task_graph; equals a fresh full_simulate.

    Re-examines tasks in ready-time order starting from ``changed``: a task
    whose ready time moved is repositioned in its device queue, and any task
    whose start or queue predecessor shifts pushes its dependents and queue
    successor.  A task popped while one of its inputs is still awaiting
    re-examination parks on that input's defer list instead of settling off
    a stale end, so each task settles essentially once.  Tasks whose times
    come out unchanged propagate nothing, which keeps the repair local.
    """
    if not tg.simulated:
        raise SimulationError("delta_simulate requires a prior full_simulate on this graph")
    if not changed:
        return _result(tg)
    tl = tg.timeline
    tasks = tg.tasks
    device_order = tg.device_order
    device_keys = tg.device_keys
    heappush = heapq.heappush
    heappop = heapq.heappop
    bisect = bisect_left
    heap: list = []
    pending: dict[int, float] = {}  # task id -> key of its live heap entry
    deferred: dict[int, list] = {}  # blocking input -> tasks waiting on it

    def push(x: int):
        if x not in pending:
            k = tl[x].ready
            pending[x] = k
            heappush(heap, (k, tasks[x].origin, x))

    for tid in changed:
        if tid in tasks:
            push(tid)
    while heap:
        ready, _, tid = heappop(heap)
        if pending.get(tid) != ready:
            continue  # superseded entry
        t = tasks[tid]
        e = tl[tid]
        blocker = -1
        new_ready = 0.0
        for p in t.inputs:
            if p in pending:
                blocker = p
                break
            pe = tl[p].end
            if pe > new_ready:
                new_ready = pe
        if blocker >= 0:
            del pending[tid]
            deferred.setdefault(blocker, []).append(tid)
            continue
        dev = t.device
        lst = device_order[dev]
        keys = device_keys[dev]
        if new_ready != ready:
            e.ready = new_ready
            probe = (new_ready, t.origin)
            idx = bisect(keys, (ready, t.origin))
            if (idx == 0 or keys[idx - 1] < probe) and (
                idx + 1 == len(keys) or probe < keys[idx + 1]
            ):
                keys[idx] = probe  # queue position survives the shift
            else:
                del lst[idx]
                del keys[idx]
                if idx < len(lst):
                    push(lst[idx])  # its queue predecessor just changed
                idx = bisect(keys, probe)
                lst.insert(idx, tid)
                keys.insert(idx, probe)
                if idx + 1 < len(lst):
                    push(lst[idx + 1])
            pending[tid] = new_ready
            heappush(heap, (new_ready, t.origin, tid))
            continue
        del pending[tid]
        idx = bisect(keys, (ready, t.origin))
        start = ready if idx == 0 else max(ready, tl[lst[idx - 1]].end)
        if start != e.start:  # exe is fixed, so the end moves iff the start does
            e.start = start
            e.end = start + t.exe_time
            for s in t.outputs:
                push(s)
            if idx + 1 < len(lst):
                push(lst[idx + 1])
        for d in deferred.pop(tid, ()):
            push(d)
    return _result(tg)


def oracle_simulate(tg: TaskGraph) -> float:
    """Event-driven reference simulator; returns the makespan only.

    Shares no scheduling code with full_simulate: it advances a global
    clock through arrival/start/finish events, keeping one FIFO queue per
    device ordered by (arrival time, task origin).
    """
    tasks = tg.tasks
    if not tasks:
        return 0.0
    FINISH, ARRIVE, START = 0, 1, 2  # same-timestamp processing order
    events: list = []
    seq = 0

    def push(when, phase, payload):
        nonlocal seq
        heapq.heappush(events, (when, phase, seq, payload))
        seq += 1

    waiting = {tid: len(t.inputs) for tid, t in tasks.items()}
    arrival = {tid: 0.0 for tid in tasks}
    pending: dict[str, list] = {}
    running: dict[str, int | None] = {}
    finish_at: dict[int, float] = {}
    completed = 0
    makespan = 0.0
    for tid in sorted(tasks):
        if waiting[tid] == 0:
            push(0.0, ARRIVE, tid)
    while events:
        now, phase, _, payload = heapq.heappop(events)
        if phase == ARRIVE:
            dev = tasks[payload].device
            heapq.heappush(pending.setdefault(dev, []),
                           (arrival[payload], tasks[payload].origin, payload))
            push(now, START, dev)
        elif phase == START:
            dev = payload
            if running.get(dev) is None and pending.get(dev):
                at, _, tid = heapq.heappop(pending[dev])
                begin = max(now, at)
                running[dev] = tid
                finish_at[tid] = begin + tasks[tid].exe_time
                push(finish_at[tid], FINISH, tid)
        else:  # FINISH
            tid = payload
            dev = tasks[tid].device
            running[dev] = None
            completed += 1
            if finish_at[tid] > makespan:
                makespan = finish_at[tid]
            for s in tasks[tid].outputs:
                if finish_at[tid] > arrival[s]:
                    arrival[s] = finish_at[tid]
                waiting[s] -= 1
                if waiting[s] == 0:
                    push(arrival[s], ARRIVE, s)
            push(now, START, dev)
    if completed != len(tasks):
        stuck = next(tid for tid in sorted(tasks) if tid not in finish_at)
        raise SimulationError(
            f"task {tasks[stuck].origin} never became ready (cycle or broken dependency)"
        )
    return makespan


# ---------------------------------------------------------------------------
# timeline exports

def chrome_trace(tg: TaskGraph) -> dict:
    """Chrome trace-event JSON: one process lane per device, links included."""
    devices = tg.device_ids()
    lane = {dev: i for i, dev in enumerate(devices)}
    events = [
        {"name": "process_name", "ph": "M", "pid": i, "tid": 0, "args": {"name": dev}}
        for dev, i in lane.items()
    ]
    for tid in sorted(tg.tasks):
        t = tg.tasks[tid]
        e = tg.timeline[tid]
        events.append({
            "name": ":".join(str(x) for x in t.origin),
            "cat": t.kind,
            "ph": "X",
            "ts": e.start * 1e6,
            "dur": (e.end - e.start) * 1e6,
            "pid": lane[t.device],
            "tid": 0,
        })
    return {"traceEvents": events, "displayTimeUnit": "ms"}


def write_chrome_trace(tg: TaskGraph, path):
    with open(path, "w") as f:
        json.dump(chrome_trace(tg), f, indent=1)


def write_timeline_csv(tg: TaskGraph, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["task", "device", "start", "end"])
        for tid in sorted(tg.tasks, key=lambda i: (tg.timeline[i].start, i)):
            t = tg.tasks[tid]
            e = tg.timeline[tid]
            w.writerow([":".join(str(x) for x in t.origin), t.device, repr(e.start), repr(e.end)])
