"""Per-operation parallelization configs and tensor-region arithmetic.

A config splits an operation's output into an equal-size grid of blocks
(one per parallel task) and assigns each block to a device.  Given an
output block, ``input_regions`` answers which slice of each input (and of
the trainable parameters) that task must read.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from itertools import product
from math import prod

from .graph import (
    DeviceTopology,
    Operation,
    OperatorGraph,
    pad_before,
    parallelizable_dims,
)

__all__ = [
    "ParallelizationConfig",
    "ParallelizationStrategy",
    "TensorRegion",
    "config_size",
    "output_region",
    "input_regions",
    "region_volume_bytes",
    "enumerate_configs",
    "data_parallel_strategy",
    "random_strategy",
    "config_issues",
    "strategy_issues",
    "divisors",
]


@dataclass(frozen=True)
class ParallelizationConfig:
    """Degree of parallelism per output dimension plus a device per task.

    ``assignment`` lists a device id for every task in row-major grid order;
    it is None for placeholder configs produced by enumeration, where the
    assignment is drawn later.
    """

    degrees: dict
    assignment: tuple[str, ...] | None = None

    def size(self) -> int:
        return prod(self.degrees.values()) if self.degrees else 1


@dataclass
class ParallelizationStrategy:
    """One config per operation, keyed by operation id."""

    configs: dict

    def copy(self) -> "ParallelizationStrategy":
        return ParallelizationStrategy(dict(self.configs))


@dataclass(frozen=True)
class TensorRegion:
    """Half-open per-dimension ranges, ordered; ``((name, lo, hi), ...)``."""

    ranges: tuple[tuple[str, int, int], ...]

    def volume_elements(self) -> int:
        v = 1
        for _, lo, hi in self.ranges:
            v *= max(0, hi - lo)
        return v

    def range_of(self, name: str) -> tuple[int, int]:
        for n, lo, hi in self.ranges:
            if n == name:
                return lo, hi
        raise KeyError(name)

    def intersect(self, other: "TensorRegion") -> "TensorRegion | None":
        """Intersection over identically-named dims; None when empty."""
        theirs = {n: (lo, hi) for n, lo, hi in other.ranges}
        out = []
        for n, lo, hi in self.ranges:
            olo, ohi = theirs[n]
            lo, hi = max(lo, olo), min(hi, ohi)
            if lo >= hi:
                return None
            out.append((n, lo, hi))
        return TensorRegion(tuple(out))


def region(*ranges: tuple[str, int, int]) -> TensorRegion:
    return TensorRegion(tuple(ranges))


def config_size(config: ParallelizationConfig) -> int:
    return config.size()


def region_volume_bytes(r: TensorRegion, element_size: int) -> int:
    return r.volume_elements() * element_size


def divisors(n: int) -> list[int]:
    return [d for d in range(1, n + 1) if n % d == 0]


# ---------------------------------------------------------------------------
# output blocks

def _grid(op: Operation, config: ParallelizationConfig):
    """(names, sizes, degrees) for the output grid, in shape order."""
    names, sizes, degs = [], [], []
    for n, sz in op.output_shape.dims:
        d = config.degrees.get(n, 1)
        if sz % d != 0:
            raise ValueError(f"op {op.id}: degree {d} does not divide {n} size {sz}")
        names.append(n)
        sizes.append(sz)
        degs.append(d)
    return names, sizes, degs


def _block_ranges(sizes, degs, k) -> list[tuple[int, int]]:
    """Row-major block k of the grid: first dim is most significant."""
    coords = []
    for d in reversed(degs):
        coords.append(k % d)
        k //= d
    coords.reverse()
    out = []
    for sz, d, c in zip(sizes, degs, coords):
        step = sz // d
        out.append((c * step, (c + 1) * step))
    return out


def output_region(op: Operation, config: ParallelizationConfig, k: int) -> TensorRegion:
    """Output block written by task ``k`` of the config, as equal tiles."""
    names, sizes, degs = _grid(op, config)
    total = prod(degs)
    if not 0 <= k < total:
        raise IndexError(f"task index {k} out of range for config of size {total}")
    bounds = _block_ranges(sizes, degs, k)
    return TensorRegion(tuple((n, lo, hi) for n, (lo, hi) in zip(names, bounds)))


# ---------------------------------------------------------------------------
# input needs

def _receptive(lo: int, hi: int, kernel: int, stride: int, pad: int, in_size: int) -> tuple[int, int]:
    """Input span feeding output positions [lo, hi), clamped to the tensor."""
    return max(0, lo * stride - pad), min(in_size, (hi - 1) * stride - pad + kernel)


def _input_needs(op: Operation, rng: dict) -> list[tuple[int, dict]]:
    """Per data-input slot, the minimal ranges (by dim name) the block reads.

    Slots whose intersection with the block is empty are omitted (possible
    for Concat).  ``rng`` maps output dim name -> (lo, hi).
    """
    tag = op.kind.tag
    ins = op.input_shapes
    if tag == "MatMul":
        # every output element mixes all non-sample input elements
        src = ins[0]
        return [(0, {n: (rng["sample"] if n == "sample" else (0, sz)) for n, sz in src.dims})]
    if tag in ("Conv1D", "Conv2D", "Pool1D", "Pool2D"):
        src = ins[0]
        need = {"sample": rng["sample"]}
        spatial = ("length",) if tag.endswith("1D") else ("height", "width")
        if tag.endswith("1D"):
            kernels = (op.kind.hp("kernel", 1),)
            strides = (op.kind.hp("stride", 1),)
        else:
            kernels = (op.kind.hp("kernel_h", 1), op.kind.hp("kernel_w", 1))
            strides = (op.kind.hp("stride_h", 1), op.kind.hp("stride_w", 1))
        padding = op.kind.hp("padding", "same")
        for name, k, st in zip(spatial, kernels, strides):
            in_size = src.size(name)
            pad = pad_before(in_size, k, st, padding)
            lo, hi = rng[name]
            need[name] = _receptive(lo, hi, k, st, pad, in_size)
        if tag.startswith("Pool"):
            need["channel"] = rng["channel"]  # pooling is per-channel
        else:
            need["channel"] = (0, src.size("channel"))  # conv mixes all input channels
        return [(0, need)]
    if tag == "Embedding":
        return [(0, {n: rng[n] for n, _ in ins[0].dims})]
    if tag == "ElementWise":
        return [(i, dict(rng)) for i in range(len(ins))]
    if tag == "Concat":
        axis = op.kind.hp("axis")
        lo, hi = rng[axis]
        out, offset = [], 0
        for i, s in enumerate(ins):
            alo, ahi = max(lo, offset), min(hi, offset + s.size(axis))
            if alo < ahi:
                need = dict(rng)
                need[axis] = (alo - offset, ahi - offset)
                out.append((i, need))
            offset += s.size(axis)
        return out
    raise ValueError(f"unknown operator kind: {tag}")


def _param_need(op: Operation, rng: dict) -> TensorRegion:
    """Slice of the trainable parameters a task reads/updates.

    Dims named "rows"/"cols" index the parameter tensor itself; kinds whose
    parameters cannot be split by any output dim get the whole-tensor region.
    """
    tag = op.kind.tag
    ins = op.input_shapes
    if tag == "MatMul":
        src = ins[0]
        features = src.volume() // src.size("sample")
        return region(("rows", *rng["channel"]), ("cols", 0, features))
    if tag in ("Conv1D", "Conv2D"):
        cin = ins[0].size("channel")
        if tag == "Conv1D":
            taps = op.kind.hp("kernel", 1)
        else:
            taps = op.kind.hp("kernel_h", 1) * op.kind.hp("kernel_w", 1)
        return region(("rows", *rng["channel"]), ("cols", 0, cin * taps))
    if tag == "Embedding":
        vocab = op.kind.hp("vocab_size", 1)
        return region(("rows", 0, vocab), ("cols", *rng["channel"]))
    return region(("all", 0, 1))


def input_regions(op: Operation, out: TensorRegion) -> list[tuple[object, TensorRegion]]:
    """Minimal input slices a task producing ``out`` must receive.

    Returns (slot, region) pairs for each data-input slot that contributes,
    followed by a ("param", region) pair when the op has trainable state.
    """
    rng = {n: (lo, hi) for n, lo, hi in out.ranges}
    result: list[tuple[object, TensorRegion]] = []
    for slot, need in _input_needs(op, rng):
        src = op.input_shapes[slot]
        ordered = tuple((n, *need[n]) for n, _ in src.dims)
        result.append((slot, TensorRegion(ordered)))
    if op.param_bytes > 0:
        result.append(("param", _param_need(op, rng)))
    return result


# ---------------------------------------------------------------------------
# config / strategy constructors

def enumerate_configs(op: Operation, topo: DeviceTopology, max_degree: int) -> list[ParallelizationConfig]:
    """All valid degree maps with total parallelism <= min(max_degree, #devices).

    Assignments are left as None placeholders; callers draw them separately.
    """
    cap = min(max_degree, len(topo.devices))
    pdims = parallelizable_dims(op)
    names = [n for n, _ in op.output_shape.dims if n in pdims]
    choices = [divisors(op.output_shape.size(n)) for n in names]
    configs = []
    for combo in product(*choices):
        if prod(combo) <= cap:
            configs.append(ParallelizationConfig(dict(zip(names, combo)), None))
    configs.sort(key=lambda c: tuple(c.degrees[n] for n in names))
    return configs


def data_parallel_strategy(g: OperatorGraph, topo: DeviceTopology) -> ParallelizationStrategy:
    """Split every op along sample only; task k runs on the k-th device (by id)."""
    devices = topo.device_ids()
    configs = {}
    for op in g.ops.values():
        sample = op.output_shape.size("sample")
        deg = max(d for d in divisors(sample) if d <= len(devices))
        degrees = {n: 1 for n in parallelizable_dims(op)}
        degrees["sample"] = deg
        configs[op.id] = ParallelizationConfig(degrees, tuple(devices[:deg]))
    return ParallelizationStrategy(configs)


def random_strategy(
    g: OperatorGraph, topo: DeviceTopology, max_degree: int, seed: int
) -> ParallelizationStrategy:
    """Uniform random degree map and uniform random device per task, per op."""
    rng = random.Random(seed)
    devices = topo.device_ids()
    configs = {}
    for op_id in sorted(g.ops):
        op = g.ops[op_id]
        choice = rng.choice(enumerate_configs(op, topo, max_degree))
        assignment = tuple(rng.choice(devices) for _ in range(choice.size()))
        configs[op_id] = ParallelizationConfig(dict(choice.degrees), assignment)
    return ParallelizationStrategy(configs)


# ---------------------------------------------------------------------------
# validity checks

def config_issues(op: Operation, config: ParallelizationConfig, topo: DeviceTopology) -> list[str]:
    issues = []
    pdims = parallelizable_dims(op)
    for name, deg in config.degrees.items():
        if name not in pdims:
            issues.append(f"op {op.id}: dimension {name} is not parallelizable for {op.kind.tag}")
            continue
        if not isinstance(deg, int) or deg < 1:
            issues.append(f"op {op.id}: degree for {name} must be a positive integer, got {deg}")
        elif op.output_shape.size(name) % deg != 0:
            issues.append(
                f"op {op.id}: degree {deg} does not divide {name} "
                f"size {op.output_shape.size(name)}"
            )
    if config.assignment is None:
        issues.append(f"op {op.id}: config has no device assignment")
    else:
        if len(config.assignment) != config.size():
            issues.append(
                f"op {op.id}: assignment lists {len(config.assignment)} devices "
                f"for {config.size()} tasks"
            )
        for dev in config.assignment:
            if dev not in topo.devices:
                issues.append(f"op {op.id}: unknown device {dev} in assignment")
    return issues


def strategy_issues(
    g: OperatorGraph, topo: DeviceTopology, strategy: ParallelizationStrategy
) -> list[str]:
    issues = []
    for op_id in g.ops:
        if op_id not in strategy.configs:
            issues.append(f"strategy missing config for op {op_id}")
    for op_id, config in strategy.configs.items():
        if op_id not in g.ops:
            issues.append(f"strategy references unknown op {op_id}")
            continue
        issues.extend(config_issues(g.ops[op_id], config, topo))
    return issues
