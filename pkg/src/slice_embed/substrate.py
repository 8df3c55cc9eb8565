"""Physical datacenter substrate: servers, switch tiers and capacitated links."""

from __future__ import annotations

import copy
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable

if TYPE_CHECKING:
    from .slice_model import SliceRequest
    from .solver import MilpSolution

# Utilization-dependent part of the link delay, ms at 100% load.
DELAY_SLOPE_MS = 2.5
# Residuals within this much of zero are treated as exhausted rather than negative.
COMMIT_TOL = 1e-7


class ConfigurationError(ValueError):
    pass


class ConsistencyError(RuntimeError):
    pass


class NodeKind(str, Enum):
    SERVER = "server"
    EDGE = "edge-switch"
    AGGREGATION = "aggregation-switch"
    DATACENTER = "datacenter-switch"


@dataclass
class Server:
    id: str
    cpu_max: float
    cpu_residual: float

    def __post_init__(self):
        if self.cpu_max <= 0:
            raise ConfigurationError(f"server {self.id}: cpu_max must be positive")
        if not 0 <= self.cpu_residual <= self.cpu_max:
            raise ConfigurationError(f"server {self.id}: residual outside [0, cpu_max]")


@dataclass
class Link:
    u: str
    v: str
    bw_max: float
    bw_residual: float
    delay_init: float = 0.1

    def __post_init__(self):
        if self.u == self.v:
            raise ConfigurationError(f"self-loop on {self.u}")
        if self.bw_max <= 0:
            raise ConfigurationError(f"link {self.u}-{self.v}: bw_max must be positive")
        if not 0 <= self.bw_residual <= self.bw_max:
            raise ConfigurationError(f"link {self.u}-{self.v}: residual outside [0, bw_max]")
        if self.delay_init < 0:
            raise ConfigurationError(f"link {self.u}-{self.v}: negative delay_init")

    @property
    def endpoints(self) -> tuple[str, str]:
        return (self.u, self.v)

    @property
    def key(self) -> frozenset:
        return frozenset((self.u, self.v))


def link_delay(link: Link, slope: float = DELAY_SLOPE_MS) -> float:
    """Delay in ms of `link` at its current residual bandwidth."""
    return (1.0 - link.bw_residual / link.bw_max) * slope + link.delay_init


class SubstrateNetwork:
    """Servers, switches and undirected links with residual CPU/bandwidth.

    Node order is insertion order and is what every downstream consumer
    (formulation, solver, exports) iterates, so two networks built the same
    way produce identical problems.
    """

    def __init__(self, servers: Iterable[Server], switches: dict[str, NodeKind],
                 links: Iterable[Link]):
        self.servers: list[Server] = list(servers)
        self.switches: dict[str, NodeKind] = dict(switches)
        self.links: list[Link] = list(links)
        self._server_index = {s.id: k for k, s in enumerate(self.servers)}
        self._link_index: dict[frozenset, int] = {}
        self.adjacency: dict[str, list[int]] = {s.id: [] for s in self.servers}
        for name in self.switches:
            if name in self.adjacency:
                raise ConfigurationError(f"duplicate node id {name}")
            self.adjacency[name] = []
        if len(self.adjacency) != len(self.servers) + len(self.switches):
            raise ConfigurationError("duplicate server id")
        for k, link in enumerate(self.links):
            for end in link.endpoints:
                if end not in self.adjacency:
                    raise ConfigurationError(f"link endpoint {end} is not a node")
            if link.key in self._link_index:
                raise ConfigurationError(f"parallel link {link.u}-{link.v}")
            self._link_index[link.key] = k
            self.adjacency[link.u].append(k)
            self.adjacency[link.v].append(k)
        for s in self.servers:
            if not self.adjacency[s.id]:
                raise ConfigurationError(f"server {s.id} has no links")
        if not self.is_connected():
            raise ConfigurationError("substrate graph is not connected")

    @property
    def nodes(self) -> list[str]:
        return [s.id for s in self.servers] + list(self.switches)

    def kind(self, node: str) -> NodeKind:
        if node in self._server_index:
            return NodeKind.SERVER
        return self.switches[node]

    def server(self, node: str) -> Server:
        return self.servers[self._server_index[node]]

    def is_server(self, node: str) -> bool:
        return node in self._server_index

    def link(self, u: str, v: str) -> Link:
        return self.links[self._link_index[frozenset((u, v))]]

    def link_index(self, u: str, v: str) -> int:
        return self._link_index[frozenset((u, v))]

    def neighbors(self, node: str) -> list[str]:
        out = []
        for k in self.adjacency[node]:
            link = self.links[k]
            out.append(link.v if link.u == node else link.u)
        return out

    def is_connected(self) -> bool:
        nodes = self.nodes
        if not nodes:
            return True
        seen = {nodes[0]}
        queue = deque([nodes[0]])
        while queue:
            n = queue.popleft()
            for m in self.neighbors(n):
                if m not in seen:
                    seen.add(m)
                    queue.append(m)
        return len(seen) == len(nodes)

    def link_delays(self, slope: float = DELAY_SLOPE_MS) -> list[float]:
        return [link_delay(link, slope) for link in self.links]

    def copy(self) -> SubstrateNetwork:
        return copy.deepcopy(self)

    def total_cpu_residual(self) -> float:
        return sum(s.cpu_residual for s in self.servers)

    def total_bw_residual(self) -> float:
        return sum(link.bw_residual for link in self.links)

    def to_edge_list(self) -> str:
        lines = [f"{l.u} {l.v} {l.bw_max!r} {l.bw_residual!r} {l.delay_init!r}"
                 for l in self.links]
        return "\n".join(lines) + "\n"

    def __repr__(self):
        return (f"SubstrateNetwork(servers={len(self.servers)}, "
                f"switches={len(self.switches)}, links={len(self.links)})")


@dataclass
class TopologyConfig:
    server_count: int = 200
    servers_per_edge_switch: int = 20
    edge_switch_count: int = 10
    aggregation_switch_count: int = 4
    datacenter_switch_count: int = 2
    cpu_per_server: float = 12.0
    server_edge_bw: float = 250.0
    edge_agg_bw: float = 2500.0
    agg_dc_bw: float = 10000.0
    delay_init: dict[str, float] = field(default_factory=lambda: {
        "server-edge": 0.1, "edge-agg": 0.1, "agg-dc": 0.1})

    def validate(self):
        counts = (self.server_count, self.servers_per_edge_switch, self.edge_switch_count,
                  self.aggregation_switch_count, self.datacenter_switch_count)
        if any(c < 1 for c in counts):
            raise ConfigurationError("all node counts must be >= 1")
        if self.server_count != self.servers_per_edge_switch * self.edge_switch_count:
            raise ConfigurationError(
                f"server_count {self.server_count} != servers_per_edge_switch "
                f"{self.servers_per_edge_switch} x edge_switch_count {self.edge_switch_count}")
        if min(self.cpu_per_server, self.server_edge_bw, self.edge_agg_bw, self.agg_dc_bw) <= 0:
            raise ConfigurationError("capacities must be positive")
        missing = {"server-edge", "edge-agg", "agg-dc"} - set(self.delay_init)
        if missing:
            raise ConfigurationError(f"delay_init missing tiers {sorted(missing)}")
        if any(d < 0 for d in self.delay_init.values()):
            raise ConfigurationError("delay_init must be >= 0")


def build_fat_tree(config: TopologyConfig) -> SubstrateNetwork:
    """Three-tier tree: servers -> edge -> aggregation -> datacenter switches.

    Edge switch e is wired to aggregation switches 2e and 2e+1 (mod count);
    every aggregation switch is wired to every datacenter switch.
    """
    config.validate()
    servers = [Server(f"S{k + 1}", config.cpu_per_server, config.cpu_per_server)
               for k in range(config.server_count)]
    edges = [f"E{k + 1}" for k in range(config.edge_switch_count)]
    aggs = [f"A{k + 1}" for k in range(config.aggregation_switch_count)]
    dcs = [f"DC{k + 1}" for k in range(config.datacenter_switch_count)]
    switches = {e: NodeKind.EDGE for e in edges}
    switches.update({a: NodeKind.AGGREGATION for a in aggs})
    switches.update({d: NodeKind.DATACENTER for d in dcs})

    d = config.delay_init
    links = []
    for k, s in enumerate(servers):
        edge = edges[k // config.servers_per_edge_switch]
        links.append(Link(s.id, edge, config.server_edge_bw, config.server_edge_bw,
                          d["server-edge"]))
    n_agg = len(aggs)
    for e_idx, edge in enumerate(edges):
        picks = []
        for a_idx in (2 * e_idx % n_agg, (2 * e_idx + 1) % n_agg):
            if a_idx not in picks:
                picks.append(a_idx)
        for a_idx in picks:
            links.append(Link(edge, aggs[a_idx], config.edge_agg_bw, config.edge_agg_bw,
                              d["edge-agg"]))
    for agg in aggs:
        for dc in dcs:
            links.append(Link(agg, dc, config.agg_dc_bw, config.agg_dc_bw, d["agg-dc"]))
    return SubstrateNetwork(servers, switches, links)


def commit_allocation(network: SubstrateNetwork, solution: MilpSolution,
                      request: SliceRequest) -> SubstrateNetwork:
    """Return a copy of `network` with the slice's CPU and flows deducted.

    A solution that is not optimal (rejected request) leaves the state as is.
    Raises ConsistencyError, without touching `network`, on over-commit.
    """
    if not solution.is_optimal:
        return network
    out = network.copy()
    for vnf in request.vnfs:
        server = out.server(solution.assignment[vnf.index])
        left = server.cpu_residual - vnf.cpu_demand
        if left < -COMMIT_TOL:
            raise ConsistencyError(
                f"VNF {vnf.index} over-commits {server.id} by {-left:.6g} GHz")
        server.cpu_residual = max(left, 0.0)
    for (_vlink, (u, v)), amount in sorted(solution.flows.items()):
        link = out.link(u, v)
        left = link.bw_residual - amount
        if left < -COMMIT_TOL:
            raise ConsistencyError(f"flow over-commits link {u}-{v} by {-left:.6g} Mbps")
        link.bw_residual = max(left, 0.0)
    return out


def utilization(network: SubstrateNetwork) -> tuple[float, float]:
    """(cpu_pct, bw_pct) aggregated over all servers / all links."""
    cpu_max = sum(s.cpu_max for s in network.servers)
    cpu_used = sum(s.cpu_max - s.cpu_residual for s in network.servers)
    bw_max = sum(l.bw_max for l in network.links)
    bw_used = sum(l.bw_max - l.bw_residual for l in network.links)
    cpu_pct = 100.0 * cpu_used / cpu_max if cpu_max else 0.0
    bw_pct = 100.0 * bw_used / bw_max if bw_max else 0.0
    return cpu_pct, bw_pct
