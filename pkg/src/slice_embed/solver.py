"""Exact MILP solving: LP relaxation + branch-and-bound, and a brute-force oracle.

The LP relaxations are solved with the HiGHS dual simplex, keeping one model
alive across the search tree so every node re-solve warm-starts from the
previous basis. Branching, node selection, pruning and incumbent handling
are implemented here.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import highspy
import networkx as nx
import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .formulation import BINARY, MilpProblem, VariableRef
from .slice_model import SliceRequest
from .substrate import SubstrateNetwork

log = logging.getLogger(__name__)

EPS = 1e-10
EPS_FALLBACK = 1e-7
# A relaxation value this close to 0/1 counts as integral; the candidate is
# then re-solved with every assignment fixed, so the answer is exactly 0/1.
INT_TOL = 1e-6
FLOW_TOL = 1e-9
DEFAULT_NODE_LIMIT = 100_000
ORACLE_CAP = 10**6

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class SolverError(RuntimeError):
    """The LP layer broke down numerically, even after loosening tolerances."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NodeLimitError(SolverError):
    """Search stopped at the node cap; the status is unknown, not infeasible."""


class OracleScopeError(ValueError):
    pass


@dataclass
class LpSolution:
    status: str
    objective: float
    values: dict[VariableRef, float]
    iterations: int = 0


@dataclass
class SolverStats:
    branch_nodes: int = 0
    lp_iterations: int = 0
    wall_time: float = 0.0

    def line(self) -> str:
        return f"nodes={self.branch_nodes} lp_iters={self.lp_iterations} wall={self.wall_time:.6f}"


@dataclass
class MilpSolution:
    status: str
    objective: float = math.nan
    assignment: dict[int, str] = field(default_factory=dict)
    flows: dict[tuple[tuple[int, int], tuple[str, str]], float] = field(default_factory=dict)
    stats: SolverStats = field(default_factory=SolverStats)

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL

    @classmethod
    def infeasible(cls, stats=None) -> MilpSolution:
        return cls(INFEASIBLE, stats=stats or SolverStats())


# LP layer ---------------------------------------------------------------

def to_arrays(problem: MilpProblem):
    """Column-compressed constraint matrix with row/column bounds."""
    n = len(problem.variables)
    c = np.zeros(n)
    for k, coef in problem.objective.items():
        c[k] = coef
    rows, cols, vals = [], [], []
    row_lo = np.empty(len(problem.constraints))
    row_hi = np.empty(len(problem.constraints))
    for r, row in enumerate(problem.constraints):
        for k, coef in row.expr.items():
            rows.append(r)
            cols.append(k)
            vals.append(coef)
        row_lo[r] = row.rhs if row.sense in ("=", ">=") else -np.inf
        row_hi[r] = row.rhs if row.sense in ("=", "<=") else np.inf
    A = sparse.csc_matrix((vals, (rows, cols)), shape=(len(problem.constraints), n))
    A.sort_indices()
    col_lo = np.array([v.bounds[0] for v in problem.variables])
    col_hi = np.array([v.bounds[1] for v in problem.variables])
    return c, A, row_lo, row_hi, col_lo, col_hi


class _Relaxation:
    """One HiGHS model whose column bounds are changed per search node."""

    def __init__(self, problem: MilpProblem, tol: float = EPS):
        c, A, row_lo, row_hi, col_lo, col_hi = to_arrays(problem)
        self.col_lo, self.col_hi = col_lo, col_hi
        self.n = len(c)
        lp = highspy.HighsLp()
        lp.num_col_ = self.n
        lp.num_row_ = A.shape[0]
        lp.col_cost_ = c
        lp.col_lower_ = col_lo
        lp.col_upper_ = np.where(np.isinf(col_hi), highspy.kHighsInf, col_hi)
        lp.row_lower_ = np.where(np.isinf(row_lo), -highspy.kHighsInf, row_lo)
        lp.row_upper_ = np.where(np.isinf(row_hi), highspy.kHighsInf, row_hi)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr
        lp.a_matrix_.index_ = A.indices
        lp.a_matrix_.value_ = A.data
        self.h = highspy.Highs()
        self.h.setOptionValue("output_flag", False)
        self.h.setOptionValue("solver", "simplex")
        self.h.setOptionValue("presolve", "off")
        self.h.setOptionValue("threads", 1)
        self._set_tol(tol)
        self.h.passModel(lp)
        self.tol = tol

    def _set_tol(self, tol):
        self.tol = tol
        self.h.setOptionValue("primal_feasibility_tolerance", tol)
        self.h.setOptionValue("dual_feasibility_tolerance", tol)

    def set_bounds(self, idx: np.ndarray, lo: np.ndarray, hi: np.ndarray):
        self.h.changeColsBounds(len(idx), idx.astype(np.int32), lo, hi)

    def solve(self) -> tuple[str, float, np.ndarray | None, int]:
        status, iters = self._run()
        if status is None:
            log.debug("LP breakdown at tol=%g, retrying at %g", self.tol, EPS_FALLBACK)
            self._set_tol(EPS_FALLBACK)
            self.h.clearSolver()
            status, more = self._run()
            iters += more
            self._set_tol(EPS)
            if status is None:
                raise SolverError("LP relaxation failed after tolerance fallback",
                                  {"model_status": str(self.h.getModelStatus()),
                                   "tolerance": EPS_FALLBACK})
        if status != OPTIMAL:
            return status, math.nan, None, iters
        values = np.array(self.h.getSolution().col_value)
        return status, self.h.getInfo().objective_function_value, values, iters

    def _run(self):
        self.h.run()
        ms = self.h.getModelStatus()
        iters = max(self.h.getInfo().simplex_iteration_count, 0)
        S = highspy.HighsModelStatus
        if ms == S.kOptimal:
            return OPTIMAL, iters
        if ms == S.kInfeasible:
            return INFEASIBLE, iters
        if ms == S.kUnbounded:
            return UNBOUNDED, iters
        return None, iters


def solve_lp(problem: MilpProblem) -> LpSolution:
    """Solve the continuous relaxation (binaries relaxed to [0, 1])."""
    status, obj, values, iters = _Relaxation(problem).solve()
    vals = {} if values is None else {v: float(values[k]) for k, v in enumerate(problem.variables)}
    return LpSolution(status, obj, vals, iters)


# Chain bound ----------------------------------------------------------------

class ChainBound:
    """Combinatorial lower bound for chain-shaped embedding problems.

    Recovers the embedding structure from the rows of a built problem and
    minimises, by dynamic programming along the chain, placement cost plus
    shortest-path flow cost under a relaxed rule set: isolation and CPU are
    enforced per contiguous run of VNFs on one server, and the virtual links
    entering/leaving a run must fit the server's incident link capacity.
    Every feasible embedding satisfies the relaxed rules, so the minimum is
    a valid bound; its argmin doubles as a candidate placement.
    """

    SLACK = 1e-9

    def __init__(self, x_index, pc, cpu, residual, cut, chain_bw, dist, k_rel):
        self.x_index = x_index  # (F, S) variable indices
        self.pc = pc
        self.cpu = cpu
        self.prefix = np.concatenate([[0.0], np.cumsum(cpu)])
        self.residual = residual
        self.cut = cut
        self.chain_bw = chain_bw
        self.dist = dist.copy()
        np.fill_diagonal(self.dist, np.inf)
        self.k = int(min(k_rel, len(cpu)))

    @classmethod
    def from_problem(cls, problem: MilpProblem) -> ChainBound | None:
        labels = {r.label for r in problem.constraints}
        if not {"eq2-iso", "node-cap", "flow-cons", "link-cap"} <= labels:
            return None
        xs = [(k, v) for k, v in enumerate(problem.variables) if v.kind == "x"]
        if not xs:
            return None
        vnfs = sorted({v.vnf for _, v in xs})
        servers = list(dict.fromkeys(v.server for _, v in xs))
        if vnfs != list(range(len(vnfs))):
            return None
        s_pos = {u: p for p, u in enumerate(servers)}
        F, S = len(vnfs), len(servers)
        x_index = np.full((F, S), -1, dtype=np.int64)
        for k, v in xs:
            x_index[v.vnf, s_pos[v.server]] = k
        if (x_index < 0).any():
            return None
        pc = np.array([[problem.objective.get(int(x_index[i, u]), 0.0) for u in range(S)]
                       for i in range(F)])

        cpu = np.zeros(F)
        residual = np.zeros(S)
        for row in problem.rows("node-cap"):
            for k, c in row.expr.items():
                v = problem.variables[k]
                cpu[v.vnf] = c
                residual[s_pos[v.server]] = row.rhs
        k_rel = min(r.rhs for r in problem.rows("eq2-iso"))

        chain_bw = np.zeros(max(F - 1, 0))
        keys = {v.vlink for v in problem.variables if v.kind == "f"}
        if {tuple(sorted(key)) for key in keys} != {(i, i + 1) for i in range(F - 1)} \
                or len(keys) != F - 1:
            return None
        for row in problem.rows("flow-cons"):
            for k, c in row.expr.items():
                v = problem.variables[k]
                if v.kind == "x" and c > 0:
                    key = next(problem.variables[q].vlink for q in row.expr
                               if problem.variables[q].kind == "f")
                    chain_bw[min(key)] = c

        cut = np.zeros(S)
        for row in problem.rows("link-cap"):
            ends = set()
            for k in row.expr:
                ends.update(problem.variables[k].arc)
            for u in ends:
                if u in s_pos:
                    cut[s_pos[u]] += row.rhs

        graph_nodes = list(servers)
        arc_cost = {}
        for k, v in enumerate(problem.variables):
            if v.kind == "f":
                a, b = v.arc
                for n in (a, b):
                    if n not in s_pos and n not in graph_nodes:
                        graph_nodes.append(n)
                c = problem.objective.get(k, 0.0)
                arc_cost[a, b] = min(arc_cost.get((a, b), np.inf), c)
        n_pos = {n: p for p, n in enumerate(graph_nodes)}
        if arc_cost:
            rows_, cols_, vals_ = zip(*[(n_pos[a], n_pos[b], c) for (a, b), c in arc_cost.items()])
            # csgraph drops explicit zeros; a tiny floor keeps zero-cost arcs present.
            vals_ = np.maximum(np.array(vals_), 1e-300)
            G = sparse.csr_matrix((vals_, (rows_, cols_)), shape=(len(graph_nodes),) * 2)
            dist = csgraph.dijkstra(G, directed=True, indices=np.arange(S))[:, :S]
        else:
            dist = np.full((S, S), np.inf)
        return cls(x_index, pc, cpu, residual, cut, chain_bw, dist, k_rel)

    def _run_ok(self, start, end):
        """CPU fits for VNFs start..end (inclusive) stacked on each server."""
        return self.prefix[end + 1] - self.prefix[start] <= self.residual + self.SLACK

    def _in_bw(self, start):
        return self.chain_bw[start - 1] if start > 0 else 0.0

    def bound(self, lo: np.ndarray, hi: np.ndarray) -> tuple[float, tuple | None]:
        """Minimum relaxed cost given per-variable bounds (full-length arrays)."""
        F, S = self.x_index.shape
        allowed = hi[self.x_index] > 0.5
        forced = lo[self.x_index] > 0.5
        for i in range(F):
            if forced[i].any():
                allowed[i] &= forced[i]
        pc = np.where(allowed, self.pc, np.inf)
        K = self.k
        C = np.full((K, S), np.inf)
        C[0] = np.where(self._run_ok(0, 0), pc[0], np.inf)
        back = []
        for i in range(F - 1):
            new = np.full((K, S), np.inf)
            for r in range(1, K):
                s = i - r + 1
                if s >= 0:
                    new[r] = np.where(self._run_ok(s, i + 1), C[r - 1] + pc[i + 1], np.inf)
            best_end = np.full(S, np.inf)
            best_r = np.zeros(S, dtype=np.int64)
            for r in range(1, K + 1):
                s = i - r + 1
                if s < 0:
                    continue
                ok = self._in_bw(s) + self.chain_bw[i] <= self.cut + self.SLACK
                cand = np.where(ok, C[r - 1], np.inf)
                better = cand < best_end
                best_end = np.where(better, cand, best_end)
                best_r = np.where(better, r, best_r)
            trans = best_end[:, None] + self.chain_bw[i] * self.dist
            prev_u = np.argmin(trans, axis=0)
            start_ok = self._run_ok(i + 1, i + 1)
            new[0] = np.where(start_ok, trans[prev_u, np.arange(S)] + pc[i + 1], np.inf)
            back.append((prev_u, best_r))
            C = new
        final = np.full((K, S), np.inf)
        for r in range(1, K + 1):
            s = F - r
            if s >= 0:
                final[r - 1] = np.where(self._in_bw(s) <= self.cut + self.SLACK, C[r - 1], np.inf)
        flat = int(np.argmin(final))
        value = float(final.flat[flat])
        if not math.isfinite(value):
            return math.inf, None
        r, u = divmod(flat, S)
        r += 1
        placement = [0] * F
        i = F - 1
        while i >= 0:
            for _ in range(r):
                placement[i] = u
                i -= 1
            if i < 0:
                break
            prev_u, best_r = back[i]
            u_next = u
            u = int(prev_u[u_next])
            r = int(best_r[u])
        return value, tuple(placement)

    def feasible(self, placement) -> bool:
        counts = np.bincount(placement, minlength=len(self.residual))
        if counts.max() > self.k:
            return False
        load = np.bincount(placement, weights=self.cpu, minlength=len(self.residual))
        return bool((load <= self.residual + self.SLACK).all())

    def indicator(self, placement) -> np.ndarray:
        return self.x_index[np.arange(len(placement)), placement]


# Branch-and-bound -----------------------------------------------------------

@dataclass(order=True)
class _Node:
    bound: float
    neg_depth: int
    seq: int
    fixings: tuple = field(compare=False)
    values: np.ndarray = field(compare=False, repr=False)


def solve_milp(problem: MilpProblem, node_limit: int = DEFAULT_NODE_LIMIT,
               eps: float = EPS, chain_bound: bool = True) -> MilpSolution:
    """Best-bound branch-and-bound over the binary assignment variables.

    Branches on the most fractional binary (lowest index on ties); open
    nodes are ordered by bound, then deepest first, then creation order.
    A node's bound is the larger of its LP relaxation and, for chain-shaped
    embedding problems, the :class:`ChainBound`. Raises NodeLimitError once
    more than `node_limit` nodes have been evaluated.
    """
    t0 = time.perf_counter()
    stats = SolverStats()
    rel = _Relaxation(problem)
    binaries = np.array([k for k, v in enumerate(problem.variables)
                         if v.integrality == BINARY], dtype=np.int64)
    chain = ChainBound.from_problem(problem) if chain_bound else None
    tried: set[tuple] = set()

    def bounds_for(fixings):
        lo, hi = rel.col_lo.copy(), rel.col_hi.copy()
        for var, val in fixings:
            lo[var] = hi[var] = val
        return lo, hi

    def relax(lo, hi):
        rel.set_bounds(binaries, lo[binaries], hi[binaries])
        status, obj, values, iters = rel.solve()
        stats.lp_iterations += iters
        if status == UNBOUNDED:
            raise SolverError("relaxation unbounded; the embedding model is always bounded")
        return status, obj, values

    incumbent_obj = math.inf
    incumbent = None
    seq = itertools.count()

    def tol():
        return eps * max(1.0, abs(incumbent_obj)) if math.isfinite(incumbent_obj) else 0.0

    def try_integral(lo, hi):
        """Re-solve with every binary fixed; update the incumbent if better."""
        nonlocal incumbent_obj, incumbent
        status, obj, values = relax(lo, hi)
        if status == OPTIMAL and obj < incumbent_obj - tol():
            incumbent_obj, incumbent = obj, values

    def consider(fixings, depth):
        """Evaluate a node; returns it if it still needs branching."""
        stats.branch_nodes += 1
        if stats.branch_nodes > node_limit:
            stats.wall_time = time.perf_counter() - t0
            raise NodeLimitError(f"node limit {node_limit} reached", {"stats": stats})
        lo, hi = bounds_for(fixings)
        cb = -math.inf
        if chain is not None:
            cb, placement = chain.bound(lo, hi)
            if cb >= incumbent_obj - tol():
                return None
            if placement not in tried and chain.feasible(placement):
                tried.add(placement)
                on = chain.indicator(placement)
                plo, phi = lo.copy(), hi.copy()
                plo[binaries] = 0.0
                phi[binaries] = 0.0
                plo[on] = phi[on] = 1.0
                try_integral(plo, phi)
                if cb >= incumbent_obj - tol():
                    return None
        status, obj, values = relax(lo, hi)
        if status != OPTIMAL:
            return None
        bound = max(obj, cb)
        if bound >= incumbent_obj - tol():
            return None
        frac = np.minimum(values[binaries], 1.0 - values[binaries])
        if frac.max() <= INT_TOL:
            flo, fhi = lo.copy(), hi.copy()
            flo[binaries] = fhi[binaries] = np.rint(values[binaries])
            try_integral(flo, fhi)
            return None
        return _Node(bound, -depth, next(seq), fixings, values)

    heap: list[_Node] = []
    root = consider((), 0)
    if root is not None:
        heap.append(root)
    while heap:
        node = heapq.heappop(heap)
        if node.bound >= incumbent_obj - tol():
            break
        frac = np.abs(node.values[binaries] - 0.5)
        var = int(binaries[int(np.argmin(frac))])
        depth = -node.neg_depth + 1
        for val in (0.0, 1.0):
            child = consider(node.fixings + ((var, val),), depth)
            if child is not None:
                heapq.heappush(heap, child)

    stats.wall_time = time.perf_counter() - t0
    if incumbent is None:
        return MilpSolution.infeasible(stats)
    return _extract(problem, incumbent, stats)


def _extract(problem: MilpProblem, values: np.ndarray, stats: SolverStats) -> MilpSolution:
    clean = np.array(values, dtype=float)
    assignment, flows = {}, {}
    for k, v in enumerate(problem.variables):
        if v.kind == "x":
            clean[k] = float(round(clean[k]))
            if clean[k] == 1.0:
                assignment[v.vnf] = v.server
        else:
            if clean[k] <= FLOW_TOL:
                clean[k] = 0.0
            else:
                flows[(v.vlink, v.arc)] = float(clean[k])
    return MilpSolution(OPTIMAL, float(problem.evaluate_objective(clean)), assignment, flows,
                        stats)


def objective_of(network: SubstrateNetwork, request: SliceRequest, solution: MilpSolution,
                 delays: Sequence[float] | None = None) -> float:
    """Placement-plus-flow cost of a solution, recomputed from its maps."""
    if delays is None:
        delays = network.link_delays()
    total = 0.0
    for vnf in request.vnfs:
        s = network.server(solution.assignment[vnf.index])
        total += ((1.0 - s.cpu_residual / s.cpu_max) * vnf.cpu_demand
                  * request.gamma(vnf.index, s.id))
    for (_key, (u, v)), amount in solution.flows.items():
        total += delays[network.link_index(u, v)] * amount
    return total


# Brute-force oracle ---------------------------------------------------------

def brute_force_solve(network: SubstrateNetwork, request: SliceRequest,
                      delays: Sequence[float] | None = None, cap: int = ORACLE_CAP,
                      tol: float = 1e-9) -> MilpSolution:
    """Enumerate every placement, routing each virtual link on its least-delay path."""
    t0 = time.perf_counter()
    servers = network.servers
    n_s, n_f = len(servers), len(request.vnfs)
    if n_s ** n_f > cap:
        raise OracleScopeError(f"{n_s}^{n_f} placements exceed the oracle cap {cap}")
    if delays is None:
        delays = network.link_delays()

    graph = nx.Graph()
    graph.add_nodes_from(network.nodes)
    for k, link in enumerate(network.links):
        graph.add_edge(link.u, link.v, weight=delays[k], index=k)
    paths = {}
    for a in servers:
        lengths, routes = nx.single_source_dijkstra(graph, a.id, weight="weight")
        for b in servers:
            if b.id != a.id and b.id in routes:
                paths[a.id, b.id] = (lengths[b.id], routes[b.id])

    placement_cost = [[(1.0 - s.cpu_residual / s.cpu_max) * vnf.cpu_demand
                       * request.gamma(vnf.index, s.id) for s in servers]
                      for vnf in request.vnfs]
    allowed = [[request.gamma(vnf.index, s.id) == 1 for s in servers] for vnf in request.vnfs]
    budget = request.delay_budget - request.total_proc_delay

    best_cost, best = math.inf, None
    enumerated = 0
    for combo in itertools.product(range(n_s), repeat=n_f):
        enumerated += 1
        if not all(allowed[i][u] for i, u in enumerate(combo)):
            continue
        counts = np.bincount(combo, minlength=n_s) if n_f else np.zeros(n_s, int)
        if counts.max(initial=0) > request.isolation_degree:
            continue
        load = np.zeros(n_s)
        for i, u in enumerate(combo):
            load[u] += request.vnfs[i].cpu_demand
        if any(load[u] > servers[u].cpu_residual + tol for u in range(n_s)):
            continue
        cost = sum(placement_cost[i][u] for i, u in enumerate(combo))
        delay = 0.0
        link_load: dict[int, float] = {}
        flows = {}
        ok = True
        for vl in request.vlinks:
            a, b = servers[combo[vl.src]].id, servers[combo[vl.dst]].id
            if a == b:
                continue
            if (a, b) not in paths:
                ok = False
                break
            length, route = paths[a, b]
            delay += length
            cost += vl.bw_demand * length
            for u, v in zip(route, route[1:]):
                k = graph[u][v]["index"]
                link_load[k] = link_load.get(k, 0.0) + vl.bw_demand
                flows[(vl.key, (u, v))] = flows.get((vl.key, (u, v)), 0.0) + vl.bw_demand
        if not ok or delay > budget + tol:
            continue
        if any(amount > network.links[k].bw_residual + tol for k, amount in link_load.items()):
            continue
        if cost < best_cost:
            best_cost = cost
            best = ({i: servers[u].id for i, u in enumerate(combo)}, flows)

    stats = SolverStats(branch_nodes=enumerated, wall_time=time.perf_counter() - t0)
    if best is None:
        return MilpSolution.infeasible(stats)
    return MilpSolution(OPTIMAL, best_cost, best[0], best[1], stats)
