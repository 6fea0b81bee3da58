"""Pluggable task cost model: profile table with an analytic fallback.

Times are keyed so that any two tasks agreeing on (operator kind,
hyperparameter digest, output-region sizes, device kind) always get the
same execution time; a task's cost is looked up once and then served from
the profile table.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from math import prod

from .graph import Connection, Device, Operation
from .partition import TensorRegion

__all__ = [
    "CostKey",
    "AnalyticCostModel",
    "CostProfile",
    "ProfileFormatError",
    "cost_digest",
    "cost_key_for",
    "task_exe_time",
    "comm_time",
    "load_profile",
    "loads_profile",
    "save_profile",
    "dumps_profile",
    "merge_profiles",
]


class ProfileFormatError(ValueError):
    pass


def cost_digest(op: Operation) -> str:
    """Digest of everything besides the output region that determines cost.

    Covers the kind tag, hyperparameters, and input shapes: two ops sharing
    a digest and an output-region size are guaranteed the same work.
    """
    payload = {
        "tag": op.kind.tag,
        "hp": sorted(op.kind.hyperparams.items()),
        "inputs": [[list(s.dims), s.element_size] for s in op.input_shapes],
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.md5(blob.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class CostKey:
    kind: str
    digest: str
    region_dims: tuple[tuple[str, int], ...]  # output-region sizes, shape order
    device_kind: str


def cost_key_for(op: Operation, out_region: TensorRegion, device_kind: str) -> CostKey:
    dims = tuple((n, hi - lo) for n, lo, hi in out_region.ranges)
    return CostKey(op.kind.tag, cost_digest(op), dims, device_kind)


@dataclass
class AnalyticCostModel:
    """Roofline-style fallback: FLOP count over a per-device-kind throughput."""

    throughput: dict = field(default_factory=dict)  # device kind -> FLOP/s
    default_throughput: float = 1.0e12
    overhead: float = 0.0  # fixed per-task seconds

    def flops(self, op: Operation, region_sizes: dict) -> float:
        tag = op.kind.tag
        elements = prod(region_sizes.values())
        if tag == "MatMul":
            src = op.input_shapes[0]
            features = src.volume() // src.size("sample")
            return 2.0 * features * elements
        if tag in ("Conv1D", "Conv2D"):
            cin = op.input_shapes[0].size("channel")
            if tag == "Conv1D":
                taps = op.kind.hp("kernel", 1)
            else:
                taps = op.kind.hp("kernel_h", 1) * op.kind.hp("kernel_w", 1)
            return 2.0 * cin * taps * elements
        if tag in ("Pool1D", "Pool2D"):
            if tag == "Pool1D":
                taps = op.kind.hp("kernel", 1)
            else:
                taps = op.kind.hp("kernel_h", 1) * op.kind.hp("kernel_w", 1)
            return float(taps * elements)
        # Embedding / ElementWise / Concat: one op per output element.
        return float(elements)

    def time(self, op: Operation, key: CostKey) -> float:
        region_sizes = {n: s for n, s in key.region_dims}
        rate = self.throughput.get(key.device_kind, self.default_throughput)
        return self.flops(op, region_sizes) / rate + self.overhead


@dataclass
class CostProfile:
    """Measured (or previously computed) task times plus the analytic fallback."""

    entries: dict = field(default_factory=dict)  # CostKey -> seconds
    fallback: AnalyticCostModel = field(default_factory=AnalyticCostModel)
    backward_multiplier: float = 2.0  # backward task cost = forward x this
    fallback_evaluations: int = 0  # analytic-model calls; cache hits don't count

    def task_exe_time(self, op: Operation, out_region: TensorRegion, device: Device) -> float:
        key = cost_key_for(op, out_region, device.kind)
        t = self.entries.get(key)
        if t is None:
            t = self.fallback.time(op, key)
            self.fallback_evaluations += 1
            self.entries[key] = t
        return t


def task_exe_time(profile: CostProfile, op: Operation, out_region: TensorRegion, device: Device) -> float:
    return profile.task_exe_time(op, out_region, device)


def comm_time(conn: Connection, nbytes: int) -> float:
    """Transfer time for nbytes over a link: latency + size / bandwidth."""
    return conn.latency + nbytes / conn.bandwidth


# ---------------------------------------------------------------------------
# profile file format
#
# One entry per line:  kind;digest;dim=size,...;device-kind;seconds
# '#' starts a comment; blank lines are ignored.

def _parse_line(line: str, lineno: int) -> tuple[CostKey, float]:
    parts = line.split(";")
    if len(parts) != 5:
        raise ProfileFormatError(f"line {lineno}: expected 5 ';'-separated fields, got {len(parts)}")
    kind, digest, dims_text, device_kind, seconds_text = (p.strip() for p in parts)
    if not kind or not digest or not device_kind:
        raise ProfileFormatError(f"line {lineno}: empty field")
    dims = []
    for item in dims_text.split(","):
        if "=" not in item:
            raise ProfileFormatError(f"line {lineno}: bad dim entry '{item}' (want name=size)")
        name, _, size_text = item.partition("=")
        try:
            size = int(size_text)
        except ValueError:
            raise ProfileFormatError(f"line {lineno}: dim size '{size_text}' is not an integer") from None
        dims.append((name.strip(), size))
    try:
        seconds = float(seconds_text)
    except ValueError:
        raise ProfileFormatError(f"line {lineno}: time '{seconds_text}' is not a number") from None
    if seconds <= 0:
        raise ProfileFormatError(f"line {lineno}: non-positive time {seconds}")
    return CostKey(kind, digest, tuple(dims), device_kind), seconds


def loads_profile(text: str, fallback: AnalyticCostModel | None = None) -> CostProfile:
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, seconds = _parse_line(line, lineno)
        entries[key] = seconds
    return CostProfile(entries, fallback or AnalyticCostModel())


def load_profile(path, fallback: AnalyticCostModel | None = None) -> CostProfile:
    with open(path) as f:
        return loads_profile(f.read(), fallback)


def dumps_profile(profile: CostProfile) -> str:
    lines = []
    for key in sorted(profile.entries, key=lambda k: (k.kind, k.digest, k.region_dims, k.device_kind)):
        dims = ",".join(f"{n}={s}" for n, s in key.region_dims)
        lines.append(f"{key.kind};{key.digest};{dims};{key.device_kind};{profile.entries[key]!r}")
    return "\n".join(lines) + ("\n" if lines else "")


def save_profile(profile: CostProfile, path):
    with open(path, "w") as f:
        f.write(dumps_profile(profile))


def merge_profiles(a: CostProfile, b: CostProfile) -> CostProfile:
    """Union of entries; on a key conflict, b's time wins.  Keeps a's fallback."""
    entries = dict(a.entries)
    entries.update(b.entries)
    return CostProfile(entries, a.fallback, a.backward_multiplier)
