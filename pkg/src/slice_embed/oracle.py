"""Cross-check the branch-and-bound solver against brute-force enumeration."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .formulation import build_problem
from .slice_model import SliceRequest, VirtualLink, VnfSpec
from .solver import MilpSolution, brute_force_solve, solve_milp
from .substrate import (Link, NodeKind, Server, SubstrateNetwork, TopologyConfig,
                        build_fat_tree)

OBJ_TOL = 1e-6


def network_to_dict(network: SubstrateNetwork) -> dict:
    return {
        "servers": [[s.id, s.cpu_max, s.cpu_residual] for s in network.servers],
        "switches": [[n, k.value] for n, k in network.switches.items()],
        "links": [[l.u, l.v, l.bw_max, l.bw_residual, l.delay_init] for l in network.links],
    }


def network_from_dict(data: dict) -> SubstrateNetwork:
    return SubstrateNetwork([Server(*s) for s in data["servers"]],
                            {n: NodeKind(k) for n, k in data["switches"]},
                            [Link(*l) for l in data["links"]])


def random_instance(rng: np.random.Generator, max_servers: int = 5, max_vnfs: int = 3,
                    min_servers: int = 2, min_vnfs: int = 2):
    """A tiny tree substrate with randomised residuals, plus one chain request.

    Every link keeps at least twice the request's total bandwidth demand, so
    no link can exceed 50% load under any single-path routing.
    """
    n_s = int(rng.integers(min_servers, max_servers + 1))
    divisors = [d for d in range(1, n_s + 1) if n_s % d == 0]
    n_edge = int(rng.choice(divisors))
    topo = TopologyConfig(server_count=n_s, servers_per_edge_switch=n_s // n_edge,
                          edge_switch_count=n_edge,
                          aggregation_switch_count=int(rng.integers(1, 3)),
                          datacenter_switch_count=int(rng.integers(1, 3)),
                          server_edge_bw=1000.0, edge_agg_bw=1000.0, agg_dc_bw=1000.0)
    network = build_fat_tree(topo)

    n_f = int(rng.integers(min_vnfs, max_vnfs + 1))
    vnfs = tuple(VnfSpec(i, float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.3, 2.0)))
                 for i in range(n_f))
    vlinks = tuple(VirtualLink(i, i + 1, float(rng.uniform(30.0, 70.0)))
                   for i in range(n_f - 1))
    total_bw = sum(v.bw_demand for v in vlinks)

    for s in network.servers:
        s.cpu_residual = float(rng.uniform(0.5, 12.0))
    for link in network.links:
        link.bw_residual = float(rng.uniform(max(2 * total_bw, 0.3 * link.bw_max), link.bw_max))
        link.delay_init = float(rng.uniform(0.05, 0.5))

    compat = {}
    for v in vnfs:
        for s in network.servers:
            if rng.random() < 0.1:
                compat[(v.index, s.id)] = 0
    slack = float(rng.uniform(0.0, 8.0))
    request = SliceRequest(0, vnfs, vlinks, sum(v.proc_delay for v in vnfs) + slack,
                           int(rng.integers(1, 4)), compat)
    return network, request


@dataclass
class OracleReport:
    checked: int = 0
    status_mismatches: int = 0
    objective_mismatches: int = 0
    max_deviation: float = 0.0
    optimal: int = 0
    failures: list[Path] = field(default_factory=list)

    @property
    def mismatches(self) -> int:
        return self.status_mismatches + self.objective_mismatches

    def summary(self) -> str:
        return (f"checked={self.checked} optimal={self.optimal} "
                f"status_mismatches={self.status_mismatches} "
                f"objective_mismatches={self.objective_mismatches} "
                f"max_deviation={self.max_deviation:.3e}")


def oracle_check(count: int, seed: int = 0, max_servers: int = 5, max_vnfs: int = 3,
                 out_dir: Path | None = None,
                 solver: Callable[..., MilpSolution] | None = None) -> OracleReport:
    """Solve `count` random instances both ways and compare.

    `solver` maps a built problem to a solution (default: solve_milp).
    Each mismatching instance is written to `out_dir` as JSON for replay.
    """
    solver = solver or solve_milp
    rng = np.random.default_rng(seed)
    report = OracleReport()
    for k in range(count):
        network, request = random_instance(rng, max_servers, max_vnfs)
        milp = solver(build_problem(network, request))
        brute = brute_force_solve(network, request)
        report.checked += 1
        bad = None
        if milp.status != brute.status:
            report.status_mismatches += 1
            bad = "status"
        elif milp.is_optimal:
            report.optimal += 1
            dev = abs(milp.objective - brute.objective)
            if not math.isfinite(dev) or dev > OBJ_TOL:
                report.objective_mismatches += 1
                bad = "objective"
            if math.isfinite(dev):
                report.max_deviation = max(report.max_deviation, dev)
        if bad and out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            path = out_dir / f"mismatch_{seed}_{k}.json"
            path.write_text(json.dumps({
                "kind": bad,
                "milp": {"status": milp.status, "objective": milp.objective},
                "oracle": {"status": brute.status, "objective": brute.objective},
                "network": network_to_dict(network),
                "request": request.to_text(),
            }, indent=1))
            report.failures.append(path)
    return report


def load_instance(path: Path) -> tuple[SubstrateNetwork, SliceRequest]:
    data = json.loads(Path(path).read_text())
    return network_from_dict(data["network"]), SliceRequest.from_text(data["request"])
