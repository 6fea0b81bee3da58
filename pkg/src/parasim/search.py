"""Strategy search: Metropolis-Hastings over per-operation configs, plus an
exhaustive branch-and-bound baseline and a local-optimality probe for
validating search results on small instances."""

from __future__ import annotations

import logging
import math
import random
import time
from dataclasses import dataclass, field
from itertools import product

from .cost import CostProfile
from .graph import DeviceTopology, OperatorGraph
from .partition import (
    ParallelizationConfig,
    ParallelizationStrategy,
    data_parallel_strategy,
    enumerate_configs,
    output_region,
    random_strategy,
)
from .simulate import delta_simulate, full_simulate
from .taskgraph import MODE_FORWARD, build_task_graph, update_task_graph

__all__ = [
    "SearchParams",
    "SearchReport",
    "ChainSummary",
    "SearchError",
    "SearchSpaceTooLarge",
    "ExhaustiveResult",
    "accept_probability",
    "accept",
    "propose",
    "mcmc_search",
    "exhaustive_optimal",
    "local_optimality_check",
]

_logger = logging.getLogger(__name__)


class SearchError(RuntimeError):
    pass


class SearchSpaceTooLarge(RuntimeError):
    pass


@dataclass
class SearchParams:
    budget_seconds: float | None = None  # wall-clock budget per initial strategy
    max_proposals: int | None = None  # per chain; makes runs reproducible
    beta: float | None = None  # None: ln(10) / (0.05 * initial cost), per chain
    max_degree: int = 4
    seed: int = 0
    initial: list | None = None  # default: data-parallel plus one random strategy
    mode: str = MODE_FORWARD
    stagnation_floor: float = 2.0  # minimum no-improvement window, seconds
    check_interval: int = 0  # >0: re-verify chain cost with a fresh build every N proposals
    polish: bool = True  # finish with a greedy descent to a local optimum
    polish_cap: float = 2e5  # skip the descent when the neighbor space exceeds this


@dataclass
class ChainSummary:
    index: int
    initial_cost: float
    best_cost: float
    proposals: int
    accepted: int
    beta: float
    termination: str


@dataclass
class SearchReport:
    best_strategy: ParallelizationStrategy
    best_cost: float
    trace: list = field(default_factory=list)  # (iteration, proposed cost, accepted)
    proposals: int = 0
    termination: str = "budget"  # of the winning chain
    chains: list = field(default_factory=list)


def accept_probability(cost_s: float, cost_s_star: float, beta: float) -> float:
    """min(1, exp(beta * (cost_s - cost_s_star))); 1 whenever the move helps."""
    if cost_s_star <= cost_s:
        return 1.0
    return math.exp(beta * (cost_s - cost_s_star))


def accept(cost_s: float, cost_s_star: float, beta: float, rng: random.Random) -> bool:
    p = accept_probability(cost_s, cost_s_star, beta)
    return True if p >= 1.0 else rng.random() < p


def _propose_change(strategy, g, topo, max_degree, rng, config_cache):
    """Uniform random op, uniform random valid degree map, uniform devices.

    The draw ignores the current config, so proposing x from y is exactly as
    likely as proposing y from x (the proposal is symmetric); re-proposing
    the current config is allowed.
    """
    op_id = rng.choice(sorted(g.ops))
    choices = config_cache.get(op_id)
    if choices is None:
        choices = config_cache[op_id] = enumerate_configs(g.ops[op_id], topo, max_degree)
    picked = rng.choice(choices)
    devices = topo.device_ids()
    assignment = tuple(rng.choice(devices) for _ in range(picked.size()))
    return op_id, ParallelizationConfig(dict(picked.degrees), assignment)


def propose(strategy: ParallelizationStrategy, g: OperatorGraph, topo: DeviceTopology,
            max_degree: int, rng: random.Random) -> ParallelizationStrategy:
    op_id, cfg = _propose_change(strategy, g, topo, max_degree, rng, {})
    out = strategy.copy()
    out.configs[op_id] = cfg
    return out


def _snapshot(strategy: ParallelizationStrategy) -> ParallelizationStrategy:
    return ParallelizationStrategy(dict(strategy.configs))


def _greedy_descend(g, topo, profile, strategy, cost, params):
    """First-improvement hill climb over single-op config replacements.

    Scans ops in id order and every (degree map, assignment) pair in
    enumeration order, keeping any strictly improving move; repeats until a
    full sweep finds none.  Deterministic, so reports stay reproducible.
    """
    maps = {oid: enumerate_configs(g.ops[oid], topo, params.max_degree)
            for oid in sorted(g.ops)}
    ndev = len(topo.devices)
    neighbor_count = sum(ndev ** m.size() for oid in maps for m in maps[oid])
    if neighbor_count > params.polish_cap:
        _logger.info("skipping final descent: %.3g neighbors exceed polish_cap %.3g",
                     neighbor_count, params.polish_cap)
        return cost, strategy
    devices = topo.device_ids()
    tg = build_task_graph(g, topo, strategy, profile, params.mode)
    best = full_simulate(tg).makespan
    improved = True
    while improved:
        improved = False
        for op_id in sorted(g.ops):
            current = tg.strategy.configs[op_id]
            for m in maps[op_id]:
                for assignment in product(devices, repeat=m.size()):
                    if m.degrees == current.degrees and assignment == current.assignment:
                        continue
                    cfg = ParallelizationConfig(dict(m.degrees), assignment)
                    _, changed = update_task_graph(tg, g, topo, op_id, cfg)
                    cand = delta_simulate(tg, changed).makespan
                    if cand < best:
                        best = cand
                        current = cfg
                        improved = True
                    else:
                        _, changed = update_task_graph(tg, g, topo, op_id, current)
                        delta_simulate(tg, changed)
    return best, _snapshot(tg.strategy)


def mcmc_search(g: OperatorGraph, topo: DeviceTopology, profile: CostProfile,
                params: SearchParams) -> SearchReport:
    """Run one Metropolis-Hastings chain per initial strategy; keep the best
    strategy seen anywhere (accepted or merely proposed).

    Each proposal is applied incrementally (update + delta simulation) and
    rolled back the same way when rejected.  A chain stops when its budget
    runs out or when no improvement has landed for max(elapsed/2, floor)
    seconds; with only max_proposals set, runs are fully deterministic.
    """
    if params.budget_seconds is None and params.max_proposals is None:
        raise ValueError("SearchParams needs budget_seconds or max_proposals")
    initial = params.initial
    if initial is None:
        initial = [
            data_parallel_strategy(g, topo),
            random_strategy(g, topo, params.max_degree, params.seed),
        ]
    trace: list = []
    chains: list[ChainSummary] = []
    best_overall = None  # (cost, strategy, chain index, termination)
    iteration = 0
    config_cache: dict = {}
    for ci, s0 in enumerate(initial):
        rng = random.Random(params.seed + 1000003 * ci)
        try:
            tg = build_task_graph(g, topo, s0, profile, params.mode)
            cost = full_simulate(tg).makespan
        except Exception as exc:
            _logger.warning("chain %d failed to start: %s", ci, exc)
            chains.append(ChainSummary(ci, math.inf, math.inf, 0, 0, 0.0, f"error: {exc}"))
            continue
        beta = params.beta if params.beta is not None else math.log(10.0) / (0.05 * cost) if cost > 0 else 1.0
        cost0 = cost
        best = cost
        best_strategy = _snapshot(tg.strategy)
        start = last_improve = time.monotonic()
        nprop = accepted = 0
        termination = "budget"
        deterministic = params.budget_seconds is None
        try:
            while True:
                if params.max_proposals is not None and nprop >= params.max_proposals:
                    termination = "proposal-limit"
                    break
                now = time.monotonic()
                if params.budget_seconds is not None and now - start >= params.budget_seconds:
                    termination = "budget"
                    break
                if not deterministic and \
                        now - last_improve > max((now - start) / 2, params.stagnation_floor):
                    termination = "stagnation"
                    break
                op_id, new_cfg = _propose_change(tg.strategy, g, topo, params.max_degree,
                                                 rng, config_cache)
                old_cfg = tg.strategy.configs[op_id]
                _, changed = update_task_graph(tg, g, topo, op_id, new_cfg)
                cand = delta_simulate(tg, changed).makespan
                nprop += 1
                iteration += 1
                ok = accept(cost, cand, beta, rng)
                trace.append((iteration, cand, ok))
                if cand < best:
                    best = cand
                    best_strategy = _snapshot(tg.strategy)
                    last_improve = time.monotonic()
                if ok:
                    cost = cand
                    accepted += 1
                else:
                    _, changed = update_task_graph(tg, g, topo, op_id, old_cfg)
                    delta_simulate(tg, changed)
                if params.check_interval and nprop % params.check_interval == 0:
                    fresh = full_simulate(
                        build_task_graph(g, topo, tg.strategy, profile, params.mode)
                    ).makespan
                    if fresh != cost:
                        raise SearchError(
                            f"chain {ci}: cached cost {cost!r} diverged from fresh simulation {fresh!r}"
                        )
        except SearchError:
            raise
        except Exception as exc:
            termination = f"error: {exc}"
            _logger.warning("chain %d aborted after %d proposals: %s", ci, nprop, exc)
        chains.append(ChainSummary(ci, cost0, best, nprop, accepted, beta, termination))
        if best_overall is None or best < best_overall[0]:
            best_overall = (best, best_strategy, ci, termination)
    if best_overall is None:
        raise SearchError("every chain failed")
    best_cost, best_strategy, _, termination = best_overall
    if params.polish:
        best_cost, best_strategy = _greedy_descend(g, topo, profile, best_strategy,
                                                   best_cost, params)
    return SearchReport(
        best_strategy=best_strategy,
        best_cost=best_cost,
        trace=trace,
        proposals=sum(c.proposals for c in chains),
        termination=termination,
        chains=chains,
    )


# ---------------------------------------------------------------------------
# exhaustive baseline

@dataclass
class ExhaustiveResult:
    strategy: ParallelizationStrategy
    cost: float
    visited: int  # search-tree nodes examined
    space_estimate: float  # raw strategy count before canonicalization/pruning


def _canonical_assignments(n: int, used: frozenset, devices_by_kind: dict):
    """Device tuples of length n, unique up to renaming unused same-kind devices.

    A slot may reuse any already-used device or claim, per kind, the first
    (lowest-id) device not used yet.
    """
    def rec(i, used_now, acc):
        if i == n:
            yield tuple(acc)
            return
        allowed = sorted(used_now)
        for kind in sorted(devices_by_kind):
            for d in devices_by_kind[kind]:
                if d not in used_now:
                    allowed.append(d)
                    break
        for d in allowed:
            acc.append(d)
            yield from rec(i + 1, used_now | {d}, acc)
            acc.pop()

    yield from rec(0, used, [])


def _prefix_subgraphs(g: OperatorGraph, order: list) -> list:
    subs = []
    for depth in range(len(order) + 1):
        keep = set(order[:depth])
        sub = OperatorGraph()
        for oid in order[:depth]:
            sub.ops[oid] = g.ops[oid]
        sub.tensors = [e for e in g.tensors if e.src in keep and e.dst in keep]
        subs.append(sub)
    return subs


def exhaustive_optimal(g: OperatorGraph, topo: DeviceTopology, profile: CostProfile,
                       max_degree: int = 4, cap: float = 1e9,
                       mode: str = MODE_FORWARD) -> ExhaustiveResult:
    """Provably optimal strategy by depth-first search over canonical configs.

    Ops are assigned in topological order; a branch dies when an admissible
    bound (the prefix's simulated makespan, or the best-case critical path
    through the remaining ops) already matches the incumbent.  Refuses
    instances whose raw space exceeds ``cap``.
    """
    order = g.topological_order()
    maps = {oid: enumerate_configs(g.ops[oid], topo, max_degree) for oid in order}
    ndev = len(topo.devices)
    estimate = 1.0
    for oid in order:
        estimate *= sum(ndev ** m.size() for m in maps[oid])
    if estimate > cap:
        raise SearchSpaceTooLarge(
            f"estimated search space of {estimate:.3g} strategies exceeds cap {cap:.3g}"
        )
    devices_by_kind: dict = {}
    for dev_id in sorted(topo.devices):
        devices_by_kind.setdefault(topo.devices[dev_id].kind, []).append(dev_id)
    # Cheapest conceivable per-task time for each op: admissible because any
    # schedule must run at least one block of the op somewhere.
    kind_devices = [topo.devices[ids[0]] for ids in devices_by_kind.values()]
    min_time = {}
    for oid in order:
        op = g.ops[oid]
        best = math.inf
        for m in maps[oid]:
            reg = output_region(op, ParallelizationConfig(m.degrees, None), 0)
            for dev in kind_devices:
                t = profile.task_exe_time(op, reg, dev)
                if t < best:
                    best = t
        min_time[oid] = best
    preds = {oid: g.predecessors(oid) for oid in order}
    subs = _prefix_subgraphs(g, order)

    seed = data_parallel_strategy(g, topo)
    best_cost = full_simulate(build_task_graph(g, topo, seed, profile, mode)).makespan
    best_strategy = seed
    configs: dict = {}
    visited = 0

    def dfs(depth: int, used: frozenset):
        nonlocal best_cost, best_strategy, visited
        visited += 1
        if depth > 0:
            tg = build_task_graph(subs[depth], topo, ParallelizationStrategy(dict(configs)),
                                  profile, mode)
            res = full_simulate(tg)
            if res.makespan >= best_cost:
                return
            if depth == len(order):
                best_cost = res.makespan
                best_strategy = ParallelizationStrategy(dict(configs))
                return
            min_end = {oid: min(tg.timeline[t].end for t in tg.op_tasks[oid])
                       for oid in order[:depth]}
            bound = res.makespan
            ec: dict = {}
            for oid in order[depth:]:
                base = 0.0
                for p in preds[oid]:
                    c = min_end[p] if p in min_end else ec.get(p, 0.0)
                    if c > base:
                        base = c
                ec[oid] = base + min_time[oid]
                if ec[oid] > bound:
                    bound = ec[oid]
            if bound >= best_cost:
                return
        elif not order:
            return
        op_id = order[depth]
        for m in maps[op_id]:
            for assignment in _canonical_assignments(m.size(), used, devices_by_kind):
                configs[op_id] = ParallelizationConfig(dict(m.degrees), assignment)
                dfs(depth + 1, used | set(assignment))
        configs.pop(op_id, None)

    dfs(0, frozenset())
    return ExhaustiveResult(best_strategy, best_cost, visited, estimate)


def local_optimality_check(strategy: ParallelizationStrategy, g: OperatorGraph,
                           topo: DeviceTopology, profile: CostProfile,
                           max_degree: int = 4, cap: float = 5e6,
                           mode: str = MODE_FORWARD):
    """Try every single-op config replacement; return (op_id, config, cost)
    for the first strictly improving neighbor, or None if the strategy is a
    local optimum.  Refuses neighbor spaces larger than ``cap``."""
    devices = topo.device_ids()
    ndev = len(devices)
    maps = {oid: enumerate_configs(g.ops[oid], topo, max_degree) for oid in sorted(g.ops)}
    neighbor_count = sum(ndev ** m.size() for oid in maps for m in maps[oid])
    if neighbor_count > cap:
        raise SearchSpaceTooLarge(
            f"{neighbor_count:.3g} neighbors exceed cap {cap:.3g}"
        )
    tg = build_task_graph(g, topo, strategy, profile, mode)
    base = full_simulate(tg).makespan
    for op_id in sorted(g.ops):
        orig = tg.strategy.configs[op_id]
        for m in maps[op_id]:
            for assignment in product(devices, repeat=m.size()):
                if m.degrees == orig.degrees and assignment == orig.assignment:
                    continue
                cfg = ParallelizationConfig(dict(m.degrees), assignment)
                _, changed = update_task_graph(tg, g, topo, op_id, cfg)
                cost = delta_simulate(tg, changed).makespan
                _, changed = update_task_graph(tg, g, topo, op_id, orig)
                delta_simulate(tg, changed)
                if cost < base:
                    return op_id, cfg, cost
    return None
