"""Sequential slice admission: solve each request against current residuals."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from .formulation import build_problem, check_aggregate, realized_delay
from .slice_model import SliceRequest, WorkloadParams, generate_workload
from .solver import DEFAULT_NODE_LIMIT, MilpSolution, NodeLimitError, solve_milp
from .substrate import SubstrateNetwork, TopologyConfig, build_fat_tree, commit_allocation, utilization

log = logging.getLogger(__name__)

BOUND_MODES = ("cpu", "bw")
DELAY_MODES = ("recompute", "frozen")


@dataclass(frozen=True, order=True)
class SweepCell:
    k_rel: int
    d_e2e: float

    @property
    def label(self) -> str:
        return f"{self.k_rel},{self.d_e2e:g}"


@dataclass
class ExperimentConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    workload: WorkloadParams = field(default_factory=WorkloadParams)
    bound_mode: str = "cpu"
    delay_mode: str = "recompute"
    sweep: list[SweepCell] = field(default_factory=lambda: [SweepCell(1, 500.0)])
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3])
    # server<->edge capacity in bw-bound mode, as a fraction of the cpu-bound value
    bw_bound_ratio: float = 0.4
    node_limit: int = DEFAULT_NODE_LIMIT
    jobs: int = 1

    def validate(self):
        self.topology.validate()
        self.workload.validate()
        if self.bound_mode not in BOUND_MODES:
            raise ValueError(f"bound_mode must be one of {BOUND_MODES}")
        if self.delay_mode not in DELAY_MODES:
            raise ValueError(f"delay_mode must be one of {DELAY_MODES}")
        if not self.sweep:
            raise ValueError("sweep must contain at least one cell")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if not 0 < self.bw_bound_ratio <= 1:
            raise ValueError("bw_bound_ratio must lie in (0, 1]")

    def effective_topology(self) -> TopologyConfig:
        if self.bound_mode == "bw":
            return replace(self.topology,
                           server_edge_bw=self.topology.server_edge_bw * self.bw_bound_ratio)
        return self.topology


@dataclass
class RequestRecord:
    request_id: int
    status: str  # accept | reject | limit
    reason: str = ""
    objective: float = math.nan
    realized_delay: float = math.nan
    wall_time: float = 0.0
    branch_nodes: int = 0
    lp_iterations: int = 0
    solved: bool = False
    solution: MilpSolution | None = field(default=None, repr=False)

    @property
    def accepted(self) -> bool:
        return self.status == "accept"


@dataclass
class RunMetrics:
    cell: SweepCell
    seed: int
    records: list[RequestRecord]
    cpu_utilization_pct: float
    bw_utilization_pct: float
    final_network: SubstrateNetwork = field(repr=False)
    requests: list[SliceRequest] = field(default_factory=list, repr=False)
    initial_network: SubstrateNetwork | None = field(default=None, repr=False)

    @property
    def accepted(self) -> int:
        return sum(r.accepted for r in self.records)

    @property
    def acceptance_defined(self) -> bool:
        return bool(self.records)

    @property
    def acceptance_pct(self) -> float:
        return 100.0 * self.accepted / len(self.records) if self.records else 0.0

    @property
    def limit_count(self) -> int:
        return sum(r.status == "limit" for r in self.records)

    @property
    def mean_solver_s(self) -> float:
        times = [r.wall_time for r in self.records if r.solved]
        return math.fsum(times) / len(times) if times else 0.0


def cell_requests(config: ExperimentConfig, cell: SweepCell, seed: int) -> list[SliceRequest]:
    """The seed's workload with the cell's isolation degree and delay budget.

    Demands depend only on the seed, so every cell of a sweep sees the same
    request sequence.
    """
    params = replace(config.workload, rng_seed=seed, isolation_degree=cell.k_rel,
                     delay_budget=cell.d_e2e)
    return generate_workload(params)


def _admit(network: SubstrateNetwork, request: SliceRequest, delays, node_limit: int):
    """Process one request; returns (record, new network state)."""
    check = check_aggregate(network, request)
    if not check:
        return RequestRecord(request.id, "reject", reason=f"aggregate-{check.reason}"), network
    problem = build_problem(network, request, delays)
    try:
        solution = solve_milp(problem, node_limit=node_limit)
    except NodeLimitError as exc:
        stats = exc.diagnostics.get("stats")
        log.warning("request %d hit the node limit", request.id)
        return RequestRecord(request.id, "limit", reason="node-limit", solved=True,
                             wall_time=stats.wall_time if stats else 0.0,
                             branch_nodes=stats.branch_nodes if stats else 0,
                             lp_iterations=stats.lp_iterations if stats else 0), network
    stats = solution.stats
    record = RequestRecord(request.id, "reject", reason="infeasible", solved=True,
                           wall_time=stats.wall_time, branch_nodes=stats.branch_nodes,
                           lp_iterations=stats.lp_iterations)
    if not solution.is_optimal:
        return record, network
    record.status, record.reason = "accept", ""
    record.objective = solution.objective
    record.realized_delay = realized_delay(solution, network, request, delays)
    record.solution = solution
    return record, commit_allocation(network, solution, request)


def _delays_for(config: ExperimentConfig, initial: SubstrateNetwork, current: SubstrateNetwork):
    if config.delay_mode == "frozen":
        return initial.link_delays()
    return current.link_delays()


def run_experiment(config: ExperimentConfig, cell: SweepCell | None = None,
                   seed: int | None = None) -> RunMetrics:
    """One admission run over the seed's workload on a fresh network."""
    cell = cell if cell is not None else config.sweep[0]
    seed = seed if seed is not None else config.seeds[0]
    initial = build_fat_tree(config.effective_topology())
    network = initial
    requests = cell_requests(config, cell, seed)
    records = []
    for request in requests:
        delays = _delays_for(config, initial, network)
        record, network = _admit(network, request, delays, config.node_limit)
        log.debug("req=%d cell=%s seed=%d status=%s", request.id, cell.label, seed, record.status)
        records.append(record)
    cpu, bw = utilization(network)
    return RunMetrics(cell, seed, records, cpu, bw, network, requests, initial)


def state_before(config: ExperimentConfig, index: int, cell: SweepCell | None = None,
                 seed: int | None = None):
    """Network, request and link delays as request `index` arrives."""
    cell = cell if cell is not None else config.sweep[0]
    seed = seed if seed is not None else config.seeds[0]
    requests = cell_requests(config, cell, seed)
    if not 0 <= index < len(requests):
        raise IndexError(f"request index {index} outside 0..{len(requests) - 1}")
    initial = build_fat_tree(config.effective_topology())
    network = initial
    for request in requests[:index]:
        _, network = _admit(network, request, _delays_for(config, initial, network),
                            config.node_limit)
    return network, requests[index], _delays_for(config, initial, network)


@dataclass
class CellResult:
    cell: SweepCell
    runs: list[RunMetrics]
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def _run_cell(args):
    config, cell = args
    try:
        return CellResult(cell, [run_experiment(config, cell, s) for s in config.seeds])
    except Exception as exc:  # a failed cell must not abort the sweep
        log.error("cell %s failed: %s", cell.label, exc)
        return CellResult(cell, [], error=f"{type(exc).__name__}: {exc}")


def sweep(config: ExperimentConfig) -> list[CellResult]:
    """Independent runs for every (cell, seed), in sweep order."""
    config.validate()
    jobs = [(config, cell) for cell in config.sweep]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            return list(pool.map(_run_cell, jobs))
    return [_run_cell(job) for job in jobs]
