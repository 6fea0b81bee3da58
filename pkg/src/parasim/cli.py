"""Command-line front end.

Subcommands:
  generate   write a built-in model graph or device topology to JSON
  check      validate a graph / topology / strategy and report every issue
  enumerate  list the valid per-op configs and their cost-profile digests
  simulate   build the task graph for one strategy and simulate it
  optimize   search for a fast strategy and write it out

Exit codes: 0 success, 1 simulation/search failure, 2 bad input.
"""

from __future__ import annotations

import argparse
import inspect
import random
import sys

from .cost import (
    AnalyticCostModel,
    CostProfile,
    ProfileFormatError,
    cost_digest,
    load_profile,
)
from .formats import (
    FormatError,
    load_graph,
    load_strategy,
    load_topology,
    save_graph,
    save_report,
    save_strategy,
    save_topology,
)
from .graph import validate_graph, validate_topology
from .models import MODEL_GENERATORS, TOPOLOGY_GENERATORS
from .partition import (
    data_parallel_strategy,
    enumerate_configs,
    random_strategy,
    strategy_issues,
)
from .search import (
    SearchError,
    SearchParams,
    _propose_change,
    mcmc_search,
)
from .simulate import (
    SimulationError,
    delta_simulate,
    full_simulate,
    write_chrome_trace,
    write_timeline_csv,
)
from .taskgraph import (
    MODE_FORWARD,
    MODE_FULL,
    build_task_graph,
    timeline_table,
    update_task_graph,
)

__all__ = ["main"]


class CliError(Exception):
    """Bad input: missing files, malformed JSON, invalid graphs.  Exit 2."""


def _load(loader, path, what):
    try:
        return loader(path)
    except FileNotFoundError:
        raise CliError(f"{what} file not found: {path}")
    except (FormatError, ProfileFormatError, ValueError) as exc:
        raise CliError(f"{what} file {path}: {exc}")


def _profile(args) -> CostProfile:
    if getattr(args, "profile", None):
        return _load(load_profile, args.profile, "profile")
    return CostProfile(fallback=AnalyticCostModel())


def _strategy_for(args, g, topo):
    """Resolve --strategy / --init into a concrete, validated strategy."""
    choice = None
    if getattr(args, "strategy", None):
        choice = f"file:{args.strategy}"
    elif getattr(args, "init", None):
        choice = args.init
    choice = choice or "data"
    if choice == "data":
        s = data_parallel_strategy(g, topo)
    elif choice == "random":
        s = random_strategy(g, topo, args.max_degree, args.seed)
    elif choice.startswith("file:"):
        s = _load(load_strategy, choice[5:], "strategy")
    else:
        raise CliError(f"unknown strategy init {choice!r} (expected data, random, or file:PATH)")
    issues = strategy_issues(g, topo, s)
    if issues:
        raise CliError("invalid strategy:\n  " + "\n  ".join(issues))
    return s


def _check_graph(g):
    report = validate_graph(g)
    if not report.ok:
        raise CliError("invalid graph:\n  " + "\n  ".join(report.issues))


def _check_topology(topo):
    report = validate_topology(topo)
    if not report.ok:
        raise CliError("invalid topology:\n  " + "\n  ".join(report.issues))


# -- generate ----------------------------------------------------------------

def _cmd_generate(args) -> int:
    name = args.name
    overrides = {
        "steps": args.steps, "layers": args.layers, "batch": args.batch,
        "hidden": args.hidden, "vocab": args.vocab, "image": args.image,
        "classes": args.classes, "gpus": args.gpus, "nodes": args.nodes,
        "gpus_per_node": args.gpus_per_node, "bandwidth": args.bandwidth,
        "latency": args.latency, "intra_bandwidth": args.intra_bandwidth,
        "inter_bandwidth": args.inter_bandwidth,
        "intra_latency": args.intra_latency, "inter_latency": args.inter_latency,
    }
    if name in MODEL_GENERATORS:
        gen, save, what = MODEL_GENERATORS[name], save_graph, "graph"
    elif name in TOPOLOGY_GENERATORS:
        gen, save, what = TOPOLOGY_GENERATORS[name], save_topology, "topology"
    else:
        known = sorted(MODEL_GENERATORS) + sorted(TOPOLOGY_GENERATORS)
        raise CliError(f"unknown generator {name!r}; available: {', '.join(known)}")
    accepted = set(inspect.signature(gen).parameters)
    kwargs = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in accepted:
            raise CliError(f"generator {name!r} does not take --{key.replace('_', '-')}")
        kwargs[key] = value
    obj = gen(**kwargs)
    if what == "graph":
        _check_graph(obj)
    else:
        _check_topology(obj)
    if args.out:
        save(obj, args.out)
        print(f"wrote {what} {name!r} to {args.out}")
    else:
        from .formats import graph_to_json, topology_to_json
        sys.stdout.write(graph_to_json(obj) if what == "graph" else topology_to_json(obj))
    return 0


# -- check -------------------------------------------------------------------

def _cmd_check(args) -> int:
    g = _load(load_graph, args.graph, "graph") if args.graph else None
    topo = _load(load_topology, args.topology, "topology") if args.topology else None
    if g is None and topo is None:
        raise CliError("nothing to check: pass --graph and/or --topology")
    if g is not None:
        _check_graph(g)
        print(f"graph ok: {len(g.ops)} ops, {len(g.tensors)} tensors")
    if topo is not None:
        _check_topology(topo)
        print(f"topology ok: {len(topo.devices)} devices, {len(topo.connections)} links")
    if args.strategy:
        if g is None or topo is None:
            raise CliError("--strategy needs both --graph and --topology")
        s = _load(load_strategy, args.strategy, "strategy")
        issues = strategy_issues(g, topo, s)
        if issues:
            raise CliError("invalid strategy:\n  " + "\n  ".join(issues))
        print(f"strategy ok: configs for {len(s.configs)} ops")
    return 0


# -- enumerate ---------------------------------------------------------------

def _cmd_enumerate(args) -> int:
    g = _load(load_graph, args.graph, "graph")
    topo = _load(load_topology, args.topology, "topology")
    _check_graph(g)
    _check_topology(topo)
    op_ids = [args.op] if args.op else sorted(g.ops)
    if args.op and args.op not in g.ops:
        raise CliError(f"no op {args.op!r} in graph")
    for op_id in op_ids:
        op = g.ops[op_id]
        configs = enumerate_configs(op, topo, args.max_degree)
        print(f"{op_id} ({op.kind.tag}, digest {cost_digest(op)}): "
              f"{len(configs)} configs up to degree {args.max_degree}")
        for cfg in configs:
            degrees = " ".join(f"{n}={d}" for n, d in sorted(cfg.degrees.items()))
            print(f"  tasks={cfg.size():<3d} {degrees}")
    return 0


# -- simulate ----------------------------------------------------------------

def _print_sim(res, topo) -> None:
    print(f"makespan: {res.makespan!r} s")
    print(f"total comm bytes: {int(res.total_comm_bytes)}")
    print("device busy time:")
    span = res.makespan or 1.0
    for dev in sorted(topo.devices):
        busy = res.device_busy.get(dev, 0.0)
        print(f"  {dev:<12} {busy!r} s ({100.0 * busy / span:.1f}%)")


def _cmd_simulate(args) -> int:
    g = _load(load_graph, args.graph, "graph")
    topo = _load(load_topology, args.topology, "topology")
    _check_graph(g)
    _check_topology(topo)
    profile = _profile(args)
    strategy = _strategy_for(args, g, topo)
    tg = build_task_graph(g, topo, strategy, profile, args.mode)
    res = full_simulate(tg)
    _print_sim(res, topo)
    if args.trace:
        write_chrome_trace(tg, args.trace)
        print(f"wrote trace to {args.trace}")
    if args.csv:
        write_timeline_csv(tg, args.csv)
        print(f"wrote timeline to {args.csv}")
    if args.check_delta:
        rng = random.Random(args.seed)
        cache: dict = {}
        mismatches = 0
        for i in range(args.check_delta):
            op_id, cfg = _propose_change(tg.strategy, g, topo, args.max_degree, rng, cache)
            old = tg.strategy.configs[op_id]
            _, changed = update_task_graph(tg, g, topo, op_id, cfg)
            delta_simulate(tg, changed)
            fresh = build_task_graph(g, topo, tg.strategy, profile, args.mode)
            full_simulate(fresh)
            if timeline_table(tg) != timeline_table(fresh):
                mismatches += 1
                print(f"check-delta: mismatch after perturbation {i} (op {op_id})")
            _, changed = update_task_graph(tg, g, topo, op_id, old)
            delta_simulate(tg, changed)
        if mismatches:
            print(f"check-delta: {mismatches}/{args.check_delta} perturbations diverged")
            return 1
        print(f"check-delta: {args.check_delta} perturbations, all matched full rebuilds")
    return 0


# -- optimize ----------------------------------------------------------------

def _cmd_optimize(args) -> int:
    g = _load(load_graph, args.graph, "graph")
    topo = _load(load_topology, args.topology, "topology")
    _check_graph(g)
    _check_topology(topo)
    profile = _profile(args)
    if args.budget_seconds is None and args.max_proposals is None:
        raise CliError("pass --budget-seconds and/or --max-proposals")
    initial = None
    if args.init:
        initial = []
        for choice in args.init:
            if choice == "data":
                initial.append(data_parallel_strategy(g, topo))
            elif choice == "random":
                initial.append(random_strategy(g, topo, args.max_degree,
                                               args.seed + len(initial)))
            elif choice.startswith("file:"):
                s = _load(load_strategy, choice[5:], "strategy")
                issues = strategy_issues(g, topo, s)
                if issues:
                    raise CliError("invalid strategy:\n  " + "\n  ".join(issues))
                initial.append(s)
            else:
                raise CliError(f"unknown --init {choice!r} (expected data, random, or file:PATH)")
    params = SearchParams(
        budget_seconds=args.budget_seconds,
        max_proposals=args.max_proposals,
        beta=args.beta,
        max_degree=args.max_degree,
        seed=args.seed,
        initial=initial,
        mode=args.mode,
        check_interval=args.check_interval,
    )
    report = mcmc_search(g, topo, profile, params)
    print(f"best cost: {report.best_cost!r} s")
    print(f"proposals: {report.proposals}")
    print(f"termination: {report.termination}")
    for c in report.chains:
        print(f"  chain {c.index}: start {c.initial_cost!r} -> best {c.best_cost!r}"
              f" ({c.accepted}/{c.proposals} accepted, {c.termination})")
    if args.out_strategy:
        save_strategy(report.best_strategy, args.out_strategy)
        print(f"wrote strategy to {args.out_strategy}")
    if args.report:
        save_report(report, args.report)
        print(f"wrote report to {args.report}")
    return 0


# -- parser ------------------------------------------------------------------

def _add_common(p, profile=True):
    p.add_argument("--graph", required=True, help="operator graph JSON")
    p.add_argument("--topology", required=True, help="device topology JSON")
    if profile:
        p.add_argument("--profile", help="task-time profile (analytic fallback if omitted)")
    p.add_argument("--max-degree", type=int, default=4,
                   help="per-op parallelism cap (default 4)")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="parasim",
        description="Simulate and search parallelization strategies for DNN operator graphs.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="emit a built-in model graph or device topology")
    g.add_argument("name", help=f"one of: {', '.join(sorted(MODEL_GENERATORS) + sorted(TOPOLOGY_GENERATORS))}")
    g.add_argument("--out", help="output path (stdout if omitted)")
    for flag in ("steps", "layers", "batch", "hidden", "vocab", "image", "classes",
                 "gpus", "nodes", "gpus-per-node"):
        g.add_argument(f"--{flag}", type=int, default=None)
    for flag in ("bandwidth", "latency", "intra-bandwidth", "inter-bandwidth",
                 "intra-latency", "inter-latency"):
        g.add_argument(f"--{flag}", type=float, default=None)

    c = sub.add_parser("check", help="validate inputs and exit")
    c.add_argument("--graph")
    c.add_argument("--topology")
    c.add_argument("--strategy")

    e = sub.add_parser("enumerate", help="list valid per-op configs and cost digests")
    _add_common(e, profile=False)
    e.add_argument("--op", help="restrict to one op id")

    s = sub.add_parser("simulate", help="simulate one strategy")
    _add_common(s)
    s.add_argument("--strategy", help="strategy JSON to simulate")
    s.add_argument("--init", help="data | random | file:PATH (default data)")
    s.add_argument("--mode", choices=[MODE_FORWARD, MODE_FULL], default=MODE_FULL)
    s.add_argument("--trace", help="write a chrome://tracing JSON here")
    s.add_argument("--csv", help="write the timeline as CSV here")
    s.add_argument("--check-delta", type=int, default=0, metavar="N",
                   help="verify N random incremental updates against full rebuilds")

    o = sub.add_parser("optimize", help="search for a fast strategy")
    _add_common(o)
    o.add_argument("--budget-seconds", type=float, default=None)
    o.add_argument("--max-proposals", type=int, default=None)
    o.add_argument("--beta", type=float, default=None,
                   help="acceptance sharpness (default scales with initial cost)")
    o.add_argument("--mode", choices=[MODE_FORWARD, MODE_FULL], default=MODE_FULL)
    o.add_argument("--init", action="append",
                   help="initial strategy: data | random | file:PATH (repeatable; "
                        "default: data plus one random)")
    o.add_argument("--check-interval", type=int, default=0,
                   help="re-verify the chain cost with a full rebuild every N proposals")
    o.add_argument("--out-strategy", help="write the best strategy JSON here")
    o.add_argument("--report", help="write the full search report JSON here")

    return ap


_COMMANDS = {
    "generate": _cmd_generate,
    "check": _cmd_check,
    "enumerate": _cmd_enumerate,
    "simulate": _cmd_simulate,
    "optimize": _cmd_optimize,
}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SimulationError, SearchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
