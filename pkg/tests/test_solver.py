import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slice_embed.formulation import ConstraintRow, MilpProblem, VariableRef, build_problem
from slice_embed.oracle import random_instance
from slice_embed.slice_model import SliceRequest, VirtualLink, VnfSpec, WorkloadParams, generate_request
from slice_embed.solver import (ChainBound, NodeLimitError, OracleScopeError, brute_force_solve,
                                objective_of, solve_lp, solve_milp)
from slice_embed.substrate import TopologyConfig, build_fat_tree


def chain(cpu, bw, d=500.0, k=1):
    vnfs = tuple(VnfSpec(i, c, 0.5) for i, c in enumerate(cpu))
    vlinks = tuple(VirtualLink(i, i + 1, b) for i, b in enumerate(bw))
    return SliceRequest(0, vnfs, vlinks, d, k)


def one_var_problem(rows):
    x = VariableRef("f", vlink=(0, 1), arc=("a", "b"))
    return MilpProblem([x], {0: 1.0}, [ConstraintRow({0: 1.0}, s, r, "link-cap", f"r{n}")
                                       for n, (s, r) in enumerate(rows)])


def test_lp_one_dimensional():
    sol = solve_lp(one_var_problem([(">=", 3.0), ("<=", 5.0)]))
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(3.0)
    assert list(sol.values.values()) == [pytest.approx(3.0)]


def test_lp_contradictory_rows():
    assert solve_lp(one_var_problem([(">=", 2.0), ("<=", 1.0)])).status == "infeasible"


def test_relaxation_bounds_two_by_two():
    net = build_fat_tree(TopologyConfig(2, 2, 1, 1, 1))
    net.servers[0].cpu_residual = 7.0
    req = chain([1.0, 1.5], [40.0])
    prob = build_problem(net, req)
    lp = solve_lp(prob)
    brute = brute_force_solve(net, req)
    assert lp.objective <= brute.objective + 1e-9
    assert solve_milp(prob).objective == pytest.approx(brute.objective, abs=1e-6)


def test_single_server_zero_objective():
    net = build_fat_tree(TopologyConfig(1, 1, 1, 1, 1))
    sol = solve_milp(build_problem(net, chain([2.0], [])))
    assert sol.is_optimal
    assert sol.assignment == {0: "S1"}
    assert sol.objective == 0.0


def test_two_vnfs_split_by_isolation():
    net = build_fat_tree(TopologyConfig(2, 2, 1, 1, 1))
    req = chain([1.0, 1.0], [50.0])
    sol = solve_milp(build_problem(net, req))
    brute = brute_force_solve(net, req)
    assert sorted(sol.assignment.values()) == ["S1", "S2"]
    assert sol.objective == pytest.approx(brute.objective, abs=1e-6)
    assert sol.objective == pytest.approx(50.0 * 0.2)


def test_infeasible_by_node_capacity():
    net = build_fat_tree(TopologyConfig(4, 2, 2, 1, 1))
    for s in net.servers:
        s.cpu_residual = 1.0
    req = chain([2.0] * 10, [40.0] * 9, k=10)
    assert solve_milp(build_problem(net, req)).status == "infeasible"
    assert solve_milp(build_problem(net, req), chain_bound=False).status == "infeasible"


def test_pigeonhole_infeasible_both_ways():
    net = build_fat_tree(TopologyConfig(2, 2, 1, 1, 1))
    req = chain([1.0] * 3, [40.0, 40.0], k=1)
    assert solve_milp(build_problem(net, req)).status == "infeasible"
    assert brute_force_solve(net, req).status == "infeasible"


def test_brute_force_cap():
    net = build_fat_tree(TopologyConfig(20, 10, 2, 2, 2))
    req = chain([1.0] * 5, [40.0] * 4)
    with pytest.raises(OracleScopeError):
        brute_force_solve(net, req)


def test_single_server_oracle_matches():
    net = build_fat_tree(TopologyConfig(1, 1, 1, 1, 1))
    net.servers[0].cpu_residual = 9.0
    req = chain([1.0, 2.0], [30.0], k=2)
    a, b = solve_milp(build_problem(net, req)), brute_force_solve(net, req)
    assert a.assignment == b.assignment == {0: "S1", 1: "S1"}
    assert a.objective == pytest.approx(b.objective)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_oracle_equivalence(seed):
    net, req = random_instance(np.random.default_rng(seed))
    milp = solve_milp(build_problem(net, req))
    brute = brute_force_solve(net, req)
    assert milp.status == brute.status
    if milp.is_optimal:
        assert milp.objective == pytest.approx(brute.objective, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_solution_properties(seed):
    net, req = random_instance(np.random.default_rng(seed))
    prob = build_problem(net, req)
    lp = solve_lp(prob)
    sol = solve_milp(prob)
    if not sol.is_optimal:
        return
    assert lp.objective <= sol.objective + 1e-9
    # exactly one server per VNF, values exactly 0/1
    values = np.zeros(len(prob.variables))
    for i, u in sol.assignment.items():
        values[prob.index[VariableRef("x", vnf=i, server=u)]] = 1.0
    for (key, arc), amount in sol.flows.items():
        assert amount >= 0
        values[prob.index[VariableRef("f", vlink=key, arc=arc)]] = amount
    assert sorted(sol.assignment) == list(range(len(req.vnfs)))
    assert prob.max_violation(values) <= 1e-7
    assert objective_of(net, req, sol) == pytest.approx(sol.objective, rel=1e-9, abs=1e-9)
    counts = {}
    for u in sol.assignment.values():
        counts[u] = counts.get(u, 0) + 1
    assert max(counts.values()) <= req.isolation_degree


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_chain_bound_is_a_lower_bound(seed):
    net, req = random_instance(np.random.default_rng(seed), max_servers=5, max_vnfs=4)
    prob = build_problem(net, req)
    cb = ChainBound.from_problem(prob)
    lo = np.array([v.bounds[0] for v in prob.variables])
    hi = np.array([v.bounds[1] for v in prob.variables])
    value, _ = cb.bound(lo, hi)
    plain = solve_milp(prob, chain_bound=False)
    assert solve_milp(prob).status == plain.status
    if plain.is_optimal:
        assert value <= plain.objective + 1e-9
        assert solve_milp(prob).objective == pytest.approx(plain.objective, abs=1e-6)
    elif math.isfinite(value):
        assert value >= 0


def test_deterministic_solution_and_stats():
    net = build_fat_tree(TopologyConfig(20, 10, 2, 2, 2))
    req = generate_request(WorkloadParams(vnfs_per_slice=5, isolation_degree=2),
                           np.random.default_rng(1))
    a = solve_milp(build_problem(net, req))
    b = solve_milp(build_problem(net, req))
    assert a.assignment == b.assignment
    assert a.flows == b.flows
    assert a.objective == b.objective
    assert a.stats.branch_nodes == b.stats.branch_nodes
    assert a.stats.lp_iterations == b.stats.lp_iterations


def test_node_limit_is_distinct_from_infeasible():
    net = build_fat_tree(TopologyConfig(20, 10, 2, 2, 2))
    req = chain([1.0] * 5, [50.0] * 4, k=1)
    with pytest.raises(NodeLimitError):
        solve_milp(build_problem(net, req), node_limit=1, chain_bound=False)


def test_desk_scale_request_without_chain_bound_still_exact():
    net = build_fat_tree(TopologyConfig(4, 2, 2, 2, 2))
    req = chain([1.0, 1.2, 0.8], [50.0, 40.0], k=1)
    a = solve_milp(build_problem(net, req))
    b = solve_milp(build_problem(net, req), chain_bound=False)
    c = brute_force_solve(net, req)
    assert a.objective == pytest.approx(b.objective, abs=1e-6)
    assert a.objective == pytest.approx(c.objective, abs=1e-6)


def test_stats_line_format():
    net = build_fat_tree(TopologyConfig(1, 1, 1, 1, 1))
    line = solve_milp(build_problem(net, chain([1.0], []))).stats.line()
    assert line.startswith("nodes=") and " lp_iters=" in line and " wall=" in line
