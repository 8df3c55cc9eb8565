"""MILP model of one slice embedding against the current substrate state.

Variables are binary assignments ``x[i, u]`` (VNF i on server u) and
continuous directed flows ``f[(i, j), (u, v)]`` (Mbps of virtual link i->j
crossing substrate link u-v in direction u->v).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

from .slice_model import SliceRequest, total_demands
from .substrate import SubstrateNetwork

LABELS = ("eq1-obj", "eq2-iso", "eq3-delay", "assign", "node-cap", "flow-cons",
          "link-cap", "compat")

BINARY = "binary"
CONTINUOUS = "continuous"


@dataclass(frozen=True)
class VariableRef:
    kind: str  # "x" or "f"
    vnf: int | None = None
    server: str | None = None
    vlink: tuple[int, int] | None = None
    arc: tuple[str, str] | None = None

    @property
    def integrality(self) -> str:
        return BINARY if self.kind == "x" else CONTINUOUS

    @property
    def bounds(self) -> tuple[float, float]:
        return (0.0, 1.0) if self.kind == "x" else (0.0, math.inf)

    @property
    def name(self) -> str:
        if self.kind == "x":
            return f"x_{self.vnf}_{self.server}"
        return f"f_{self.vlink[0]}_{self.vlink[1]}_{self.arc[0]}_{self.arc[1]}"

    @classmethod
    def parse(cls, name: str) -> VariableRef:
        parts = name.split("_")
        if parts[0] == "x" and len(parts) == 3:
            return cls("x", vnf=int(parts[1]), server=parts[2])
        if parts[0] == "f" and len(parts) == 5:
            return cls("f", vlink=(int(parts[1]), int(parts[2])), arc=(parts[3], parts[4]))
        raise ValueError(f"unrecognised variable name {name!r}")


# Sparse linear expression: variable index -> coefficient.
LinearExpr = dict


@dataclass
class ConstraintRow:
    expr: LinearExpr
    sense: str  # "<=", "=", ">="
    rhs: float
    label: str
    name: str

    def __post_init__(self):
        if self.sense not in ("<=", "=", ">="):
            raise ValueError(f"bad sense {self.sense!r}")
        if not math.isfinite(self.rhs):
            raise ValueError(f"row {self.name}: non-finite rhs")


@dataclass
class MilpProblem:
    variables: list[VariableRef]
    objective: LinearExpr
    constraints: list[ConstraintRow]
    name: str = "slice"
    index: dict[VariableRef, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.index:
            self.index = {v: k for k, v in enumerate(self.variables)}

    def rows(self, label: str) -> list[ConstraintRow]:
        return [r for r in self.constraints if r.label == label]

    def evaluate_objective(self, values) -> float:
        return sum(c * values[k] for k, c in self.objective.items())

    def max_violation(self, values) -> float:
        worst = 0.0
        for row in self.constraints:
            lhs = sum(c * values[k] for k, c in row.expr.items())
            if row.sense == "<=":
                worst = max(worst, lhs - row.rhs)
            elif row.sense == ">=":
                worst = max(worst, row.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - row.rhs))
        return worst


def _arcs(network: SubstrateNetwork):
    """Both directions of every link, paired with the link index."""
    for k, link in enumerate(network.links):
        yield k, (link.u, link.v)
        yield k, (link.v, link.u)


def build_problem(network: SubstrateNetwork, request: SliceRequest,
                  delays: Sequence[float] | None = None) -> MilpProblem:
    """Build the embedding MILP for `request` at the network's current state.

    `delays` overrides the per-link delay (indexed like ``network.links``);
    by default each link's delay is evaluated from its current residual.
    """
    if delays is None:
        delays = network.link_delays()
    servers = network.servers
    nodes = network.nodes

    variables: list[VariableRef] = []
    for vnf in request.vnfs:
        for s in servers:
            variables.append(VariableRef("x", vnf=vnf.index, server=s.id))
    arcs = list(_arcs(network))
    for vl in request.vlinks:
        for _, arc in arcs:
            variables.append(VariableRef("f", vlink=vl.key, arc=arc))
    index = {v: k for k, v in enumerate(variables)}

    def x(i, u):
        return index[VariableRef("x", vnf=i, server=u)]

    def f(key, arc):
        return index[VariableRef("f", vlink=key, arc=arc)]

    objective: LinearExpr = {}
    for vnf in request.vnfs:
        for s in servers:
            weight = 1.0 - s.cpu_residual / s.cpu_max
            objective[x(vnf.index, s.id)] = weight * vnf.cpu_demand * request.gamma(vnf.index, s.id)
    for vl in request.vlinks:
        for k, arc in arcs:
            objective[f(vl.key, arc)] = delays[k]

    rows: list[ConstraintRow] = []
    for s in servers:
        expr = {x(v.index, s.id): 1.0 for v in request.vnfs}
        rows.append(ConstraintRow(expr, "<=", float(request.isolation_degree), "eq2-iso",
                                  f"iso_{s.id}"))

    expr = {}
    for vl in request.vlinks:
        for k, arc in arcs:
            expr[f(vl.key, arc)] = delays[k] / vl.bw_demand
    rows.append(ConstraintRow(expr, "<=", request.delay_budget - request.total_proc_delay,
                              "eq3-delay", "delay"))

    for vnf in request.vnfs:
        expr = {x(vnf.index, s.id): 1.0 for s in servers}
        rows.append(ConstraintRow(expr, "=", 1.0, "assign", f"assign_{vnf.index}"))

    for s in servers:
        expr = {x(v.index, s.id): v.cpu_demand for v in request.vnfs}
        rows.append(ConstraintRow(expr, "<=", s.cpu_residual, "node-cap", f"cap_{s.id}"))

    for vl in request.vlinks:
        i, j = vl.key
        for w in nodes:
            expr = {}
            for k in network.adjacency[w]:
                link = network.links[k]
                other = link.v if link.u == w else link.u
                expr[f(vl.key, (w, other))] = 1.0
                expr[f(vl.key, (other, w))] = -1.0
            if network.is_server(w):
                expr[x(i, w)] = -vl.bw_demand
                expr[x(j, w)] = vl.bw_demand
            rows.append(ConstraintRow(expr, "=", 0.0, "flow-cons", f"flow_{i}_{j}_{w}"))

    for link in network.links:
        expr = {}
        for vl in request.vlinks:
            expr[f(vl.key, (link.u, link.v))] = 1.0
            expr[f(vl.key, (link.v, link.u))] = 1.0
        rows.append(ConstraintRow(expr, "<=", link.bw_residual, "link-cap",
                                  f"bw_{link.u}_{link.v}"))

    for vnf in request.vnfs:
        for s in servers:
            rows.append(ConstraintRow({x(vnf.index, s.id): 1.0}, "<=",
                                      float(request.gamma(vnf.index, s.id)), "compat",
                                      f"compat_{vnf.index}_{s.id}"))

    return MilpProblem(variables, objective, rows, name=f"slice{request.id}", index=index)


def expected_row_counts(n_vnfs: int, n_servers: int, n_nodes: int, n_links: int,
                        n_vlinks: int) -> dict[str, int]:
    return {
        "eq2-iso": n_servers,
        "eq3-delay": 1,
        "assign": n_vnfs,
        "node-cap": n_servers,
        "flow-cons": n_vlinks * n_nodes,
        "link-cap": n_links,
        "compat": n_vnfs * n_servers,
    }


@dataclass(frozen=True)
class AggregateCheck:
    feasible: bool
    reason: str | None = None

    def __bool__(self):
        return self.feasible


def check_aggregate(network: SubstrateNetwork, request: SliceRequest) -> AggregateCheck:
    """Whole-datacenter capacity screen run before any solve."""
    cpu, bw = total_demands(request)
    if cpu > network.total_cpu_residual():
        return AggregateCheck(False, "cpu")
    if bw > network.total_bw_residual():
        return AggregateCheck(False, "bandwidth")
    return AggregateCheck(True)


def realized_delay(solution, network: SubstrateNetwork, request: SliceRequest,
                   delays: Sequence[float] | None = None) -> float:
    """Recompute the delay-budget left-hand side from a solution's flows.

    `network` must be the state the request was solved against (before commit).
    """
    if delays is None:
        delays = network.link_delays()
    demand = {vl.key: vl.bw_demand for vl in request.vlinks}
    total = request.total_proc_delay
    for (key, (u, v)), amount in solution.flows.items():
        total += amount / demand[key] * delays[network.link_index(u, v)]
    return total


# LP text format ---------------------------------------------------------

_LINE_WIDTH = 200


def _fmt(c: float) -> str:
    return repr(float(c))


def _terms(expr: LinearExpr, variables, keep_zero=False) -> list[str]:
    out = []
    for k in sorted(expr):
        c = expr[k]
        if c == 0 and not keep_zero:
            continue
        sign = "-" if c < 0 or (c == 0 and math.copysign(1, c) < 0) else "+"
        out.append(f"{sign} {_fmt(abs(c))} {variables[k].name}")
    return out


def _wrap(head: str, tokens: list[str]) -> list[str]:
    lines, cur = [], head
    for t in tokens:
        if len(cur) + len(t) + 1 > _LINE_WIDTH:
            lines.append(cur)
            cur = "   "
        cur += " " + t
    lines.append(cur)
    return lines


def write_lp(problem: MilpProblem) -> str:
    """Serialise in CPLEX LP format (readable by HiGHS, CPLEX, Gurobi, GLPK)."""
    var = problem.variables
    out = [f"\\ {problem.name}", "Minimize"]
    terms = _terms(problem.objective, var, keep_zero=True) or ["0 " + var[0].name]
    out += _wrap(" obj:", terms)
    out.append("Subject To")
    for row in problem.constraints:
        terms = _terms(row.expr, var)
        if not terms:
            terms = [f"0 {var[0].name}"]
        out += _wrap(f" {row.label.replace('-', '.')}.{row.name}:",
                     terms + [row.sense, _fmt(row.rhs)])
    out.append("Bounds")
    for v in var:
        if v.integrality == CONTINUOUS:
            out.append(f" {v.name} >= 0")
    out.append("Binary")
    binaries = [v.name for v in var if v.integrality == BINARY]
    out += _wrap("", binaries)
    out.append("End")
    return "\n".join(out) + "\n"


_SECTION = re.compile(r"^(minimize|subject to|bounds|binary|binaries|end)$", re.IGNORECASE)


def read_lp(text: str) -> MilpProblem:
    """Parse the LP subset produced by :func:`write_lp`."""
    sections: dict[str, list[str]] = {}
    current = None
    name = "slice"
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            name = line[1:].strip() or name
            continue
        m = _SECTION.match(line)
        if m:
            current = m.group(1).lower()
            if current == "binaries":
                current = "binary"
            sections.setdefault(current, [])
            continue
        if current is None:
            raise ValueError(f"content outside a section: {line!r}")
        sections[current].append(line)

    variables: list[VariableRef] = []
    index: dict[VariableRef, int] = {}

    def ref(token: str) -> int:
        v = VariableRef.parse(token)
        if v not in index:
            index[v] = len(variables)
            variables.append(v)
        return index[v]

    def parse_expr(tokens: list[str]) -> LinearExpr:
        expr: LinearExpr = {}
        k = 0
        while k < len(tokens):
            sign = 1.0
            if tokens[k] in "+-":
                sign = -1.0 if tokens[k] == "-" else 1.0
                k += 1
            coef = float(tokens[k])
            k += 1
            idx = ref(tokens[k])
            k += 1
            expr[idx] = expr.get(idx, 0.0) + sign * coef
        return expr

    obj_tokens = " ".join(sections.get("minimize", [])).split()
    if obj_tokens and obj_tokens[0].endswith(":"):
        obj_tokens = obj_tokens[1:]

    rows: list[ConstraintRow] = []
    statements: list[str] = []
    for line in sections.get("subject to", []):
        if line.split()[0].endswith(":"):
            statements.append(line)
        else:
            statements[-1] += " " + line
    objective = parse_expr(obj_tokens)
    for stmt in statements:
        head, body = stmt.split(":", 1)
        tokens = body.split()
        sense, rhs = tokens[-2], float(tokens[-1])
        label, _, rname = head.strip().rpartition(".")
        rows.append(ConstraintRow(parse_expr(tokens[:-2]), sense, rhs,
                                  label.replace(".", "-"), rname))
    for line in sections.get("binary", []):
        for token in line.split():
            ref(token)
    return MilpProblem(variables, objective, rows, name=name)
