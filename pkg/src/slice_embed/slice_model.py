"""Slice requests (VNF chains with QoS demands) and random workloads."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np


@dataclass(frozen=True)
class VnfSpec:
    index: int
    cpu_demand: float  # GHz
    proc_delay: float  # ms

    def __post_init__(self):
        if self.cpu_demand <= 0:
            raise ValueError(f"VNF {self.index}: cpu_demand must be positive")
        if self.proc_delay < 0:
            raise ValueError(f"VNF {self.index}: proc_delay must be >= 0")


@dataclass(frozen=True)
class VirtualLink:
    src: int
    dst: int
    bw_demand: float  # Mbps

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError(f"virtual link {self.src}->{self.dst} is a self-loop")
        if self.bw_demand <= 0:
            raise ValueError(f"virtual link {self.src}->{self.dst}: bw_demand must be positive")

    @property
    def key(self) -> tuple[int, int]:
        return (self.src, self.dst)


@dataclass(frozen=True)
class SliceRequest:
    id: int
    vnfs: tuple[VnfSpec, ...]
    vlinks: tuple[VirtualLink, ...]
    delay_budget: float  # ms
    isolation_degree: int = 1
    # (vnf index, server id) -> 0 marks an incompatible placement; absent pairs are 1
    compatibility: Mapping[tuple[int, str], int] = field(default_factory=dict)

    def __post_init__(self):
        if self.isolation_degree < 1:
            raise ValueError("isolation_degree must be >= 1")
        indices = [v.index for v in self.vnfs]
        if indices != list(range(len(indices))):
            raise ValueError("VNF indices must be 0..n-1 in order")
        seen = set()
        for vl in self.vlinks:
            if not (0 <= vl.src < len(indices) and 0 <= vl.dst < len(indices)):
                raise ValueError(f"virtual link {vl.key} references a missing VNF")
            if vl.key in seen:
                raise ValueError(f"duplicate virtual link {vl.key}")
            seen.add(vl.key)
        if len(self.vnfs) > 1 and not _connected(len(self.vnfs), self.vlinks):
            raise ValueError("virtual links do not connect all VNFs")

    def gamma(self, vnf: int, server: str) -> int:
        return self.compatibility.get((vnf, server), 1)

    @property
    def total_proc_delay(self) -> float:
        return sum(v.proc_delay for v in self.vnfs)

    @property
    def trivially_infeasible(self) -> bool:
        """Processing delays alone already exceed the budget."""
        return self.delay_budget <= self.total_proc_delay

    def with_qos(self, isolation_degree: int | None = None,
                 delay_budget: float | None = None) -> SliceRequest:
        changes = {}
        if isolation_degree is not None:
            changes["isolation_degree"] = isolation_degree
        if delay_budget is not None:
            changes["delay_budget"] = delay_budget
        return replace(self, **changes)

    def to_text(self) -> str:
        lines = [f"slice {self.id} K={self.isolation_degree} d={self.delay_budget!r}"]
        lines += [f"vnf {v.index} {v.cpu_demand!r} {v.proc_delay!r}" for v in self.vnfs]
        lines += [f"vlink {l.src} {l.dst} {l.bw_demand!r}" for l in self.vlinks]
        lines += [f"gamma {i} {u} {g}" for (i, u), g in sorted(self.compatibility.items())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> SliceRequest:
        header = None
        vnfs, vlinks, compat = [], [], {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            parts = raw.split()
            if not parts:
                continue
            tag = parts[0]
            try:
                if tag == "slice":
                    fields = dict(p.split("=", 1) for p in parts[2:])
                    header = (int(parts[1]), int(fields["K"]), float(fields["d"]))
                elif tag == "vnf":
                    vnfs.append(VnfSpec(int(parts[1]), float(parts[2]), float(parts[3])))
                elif tag == "vlink":
                    vlinks.append(VirtualLink(int(parts[1]), int(parts[2]), float(parts[3])))
                elif tag == "gamma":
                    compat[(int(parts[1]), parts[2])] = int(parts[3])
                else:
                    raise ValueError(f"unknown record {tag!r}")
            except (IndexError, KeyError, ValueError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from exc
        if header is None:
            raise ValueError("missing 'slice' header line")
        sid, k, d = header
        return cls(sid, tuple(vnfs), tuple(vlinks), d, k, compat)


def _connected(n: int, vlinks) -> bool:
    adj = {k: set() for k in range(n)}
    for vl in vlinks:
        adj[vl.src].add(vl.dst)
        adj[vl.dst].add(vl.src)
    seen, stack = {0}, [0]
    while stack:
        for m in adj[stack.pop()] - seen:
            seen.add(m)
            stack.append(m)
    return len(seen) == n


@dataclass
class WorkloadParams:
    request_count: int = 200
    vnfs_per_slice: int = 10
    cpu_demand_range: tuple[float, float] = (0.5, 2.0)
    bw_demand_range: tuple[float, float] = (30.0, 70.0)
    proc_delay_range: tuple[float, float] = (0.3, 2.0)
    delay_budget: float = 500.0
    isolation_degree: int = 1
    rng_seed: int = 0

    def validate(self):
        if self.request_count < 0 or self.vnfs_per_slice < 1:
            raise ValueError("request_count must be >= 0 and vnfs_per_slice >= 1")
        for name in ("cpu_demand_range", "bw_demand_range", "proc_delay_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must satisfy 0 < low <= high, got ({lo}, {hi})")


def generate_request(params: WorkloadParams, rng: np.random.Generator,
                     request_id: int = 0) -> SliceRequest:
    """Draw one linear-chain slice; every value is uniform in its range."""
    n = params.vnfs_per_slice
    cpu = rng.uniform(*params.cpu_demand_range, size=n)
    alpha = rng.uniform(*params.proc_delay_range, size=n)
    bw = rng.uniform(*params.bw_demand_range, size=n - 1)
    vnfs = tuple(VnfSpec(k, float(cpu[k]), float(alpha[k])) for k in range(n))
    vlinks = tuple(VirtualLink(k, k + 1, float(bw[k])) for k in range(n - 1))
    return SliceRequest(request_id, vnfs, vlinks, params.delay_budget, params.isolation_degree)


def generate_workload(params: WorkloadParams) -> list[SliceRequest]:
    params.validate()
    rng = np.random.default_rng(params.rng_seed)
    return [generate_request(params, rng, k) for k in range(params.request_count)]


def total_demands(request: SliceRequest) -> tuple[float, float]:
    return (sum(v.cpu_demand for v in request.vnfs),
            sum(l.bw_demand for l in request.vlinks))
