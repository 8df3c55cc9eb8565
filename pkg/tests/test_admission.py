from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slice_embed.admission import (ExperimentConfig, SweepCell, cell_requests, run_experiment,
                                   state_before, sweep)
from slice_embed.formulation import build_problem, realized_delay
from slice_embed.slice_model import WorkloadParams
from slice_embed.solver import solve_milp
from slice_embed.substrate import TopologyConfig, build_fat_tree, commit_allocation, utilization

DESK = TopologyConfig(20, 10, 2, 2, 2)


def desk(k=2, d=500.0, n=12, vnfs=4, topology=DESK, **kw):
    return ExperimentConfig(topology=topology,
                            workload=WorkloadParams(request_count=n, vnfs_per_slice=vnfs),
                            sweep=[SweepCell(k, d)], seeds=[0], **kw)


@pytest.fixture(scope="module")
def desk_run():
    return run_experiment(desk(k=2, n=25, vnfs=5))


def test_zero_requests():
    run = run_experiment(desk(n=0))
    assert run.records == []
    assert (run.cpu_utilization_pct, run.bw_utilization_pct) == (0.0, 0.0)
    assert run.acceptance_pct == 0.0 and not run.acceptance_defined


def test_oversized_request_rejected_before_solver():
    # demands are at least 0.5 GHz, more than the whole datacenter holds
    cfg = desk(n=1, vnfs=1, topology=TopologyConfig(1, 1, 1, 1, 1, cpu_per_server=0.25))
    (rec,) = run_experiment(cfg).records
    assert rec.status == "reject" and rec.reason == "aggregate-cpu"
    assert not rec.solved and rec.branch_nodes == 0


def test_accepted_slices_replay_clean(desk_run):
    cell = desk_run.cell
    net = desk_run.initial_network
    for req, rec in zip(desk_run.requests, desk_run.records):
        if not rec.accepted:
            continue
        sol = rec.solution
        assert realized_delay(sol, net, req) <= cell.d_e2e + 1e-9
        counts = {}
        for u in sol.assignment.values():
            counts[u] = counts.get(u, 0) + 1
        assert max(counts.values()) <= cell.k_rel
        net = commit_allocation(net, sol, req)
        assert all(s.cpu_residual >= 0 for s in net.servers)
        assert all(l.bw_residual >= 0 for l in net.links)
    # replaying only accepted requests reproduces the terminal state
    assert net.to_edge_list() == desk_run.final_network.to_edge_list()
    assert [s.cpu_residual for s in net.servers] == \
        [s.cpu_residual for s in desk_run.final_network.servers]


def test_aggregates_recompute(desk_run):
    cpu, bw = utilization(desk_run.final_network)
    assert (desk_run.cpu_utilization_pct, desk_run.bw_utilization_pct) == (cpu, bw)
    assert desk_run.acceptance_pct == pytest.approx(
        100 * sum(r.accepted for r in desk_run.records) / len(desk_run.records))
    assert 0 < desk_run.accepted < len(desk_run.records)


def test_run_is_deterministic(desk_run):
    again = run_experiment(desk(k=2, n=25, vnfs=5))
    assert [(r.status, r.objective, r.branch_nodes) for r in again.records] == \
        [(r.status, r.objective, r.branch_nodes) for r in desk_run.records]


def test_demands_shared_across_cells():
    cfg = desk()
    a = cell_requests(cfg, SweepCell(1, 50.0), 3)
    b = cell_requests(cfg, SweepCell(7, 200.0), 3)
    assert [r.vnfs for r in a] == [r.vnfs for r in b]
    assert {r.isolation_degree for r in b} == {7}
    assert {r.delay_budget for r in a} == {50.0}


def test_single_cell_sweep_matches_run_experiment():
    cfg = desk(n=6)
    (cell,) = sweep(cfg)
    direct = run_experiment(cfg)
    assert not cell.failed
    (run,) = cell.runs
    assert [(r.status, r.objective) for r in run.records] == \
        [(r.status, r.objective) for r in direct.records]
    assert run.cpu_utilization_pct == direct.cpu_utilization_pct


def test_sweep_cells_and_failure_isolation():
    cfg = desk(n=3)
    cfg.sweep = [SweepCell(k, 500.0) for k in (1, 2)]
    cfg.seeds = [0, 1]
    results = sweep(cfg)
    assert [c.cell.k_rel for c in results] == [1, 2]
    assert all(len(c.runs) == 2 and not c.failed for c in results)
    bad = replace(cfg, sweep=[SweepCell(1, 500.0), SweepCell(0, 500.0)])
    out = sweep(bad)
    assert not out[0].failed and out[1].failed


def test_node_limit_flags_and_continues():
    run = run_experiment(desk(n=4, node_limit=0))
    assert run.limit_count == 4
    assert all(r.reason == "node-limit" and not r.accepted for r in run.records)
    assert run.cpu_utilization_pct == 0.0


def test_bw_mode_scales_server_links():
    cfg = desk(bound_mode="bw")
    net = build_fat_tree(cfg.effective_topology())
    assert net.link("S1", "E1").bw_max == pytest.approx(100.0)
    assert net.link("E1", "A1").bw_max == 2500


def test_frozen_mode_uses_initial_delays():
    cfg = desk(n=6, delay_mode="frozen")
    net, _, delays = state_before(cfg, 5)
    initial = build_fat_tree(DESK).link_delays()
    assert delays == initial
    assert net.link_delays() != initial
    run = run_experiment(cfg)
    assert run.accepted > 0


def test_state_before_bounds():
    with pytest.raises(IndexError):
        state_before(desk(n=3), 3)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 6), st.floats(2.0, 30.0), st.floats(0.0, 30.0))
def test_relaxing_delay_budget_never_loses_feasibility(seed, index, d1, extra):
    cfg = ExperimentConfig(topology=TopologyConfig(8, 4, 2, 2, 1),
                           workload=WorkloadParams(request_count=7, vnfs_per_slice=3),
                           sweep=[SweepCell(2, 500.0)], seeds=[seed])
    net, req, delays = state_before(cfg, index, seed=seed)
    tight = solve_milp(build_problem(net, req.with_qos(delay_budget=d1), delays))
    loose = solve_milp(build_problem(net, req.with_qos(delay_budget=d1 + extra), delays))
    if tight.is_optimal:
        assert loose.is_optimal
        assert loose.objective <= tight.objective + 1e-6


def test_cpu_regime_vs_bw_regime_small():
    base = desk(k=3, n=15, vnfs=5)
    cpu = run_experiment(base)
    bw = run_experiment(replace(base, bound_mode="bw"))
    assert bw.accepted <= cpu.accepted
    assert np.isfinite(cpu.mean_solver_s)
