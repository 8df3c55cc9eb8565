"""CSV result rows and per-request event logs."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields

from .admission import CellResult, RunMetrics

COLUMNS = ("k_rel", "d_e2e_ms", "seed", "requests", "accepted", "limit_events",
           "cpu_util_pct", "bw_util_pct", "acceptance_pct", "mean_solver_s")
AVERAGED = ("requests", "accepted", "limit_events", "cpu_util_pct", "bw_util_pct",
            "acceptance_pct", "mean_solver_s")


@dataclass
class ReportRow:
    k_rel: int
    d_e2e_ms: float
    seed: str  # seed number or "mean"
    requests: float
    accepted: float
    limit_events: float
    cpu_util_pct: float
    bw_util_pct: float
    acceptance_pct: float
    mean_solver_s: float | None

    @classmethod
    def from_run(cls, run: RunMetrics, wall_clock: bool = True) -> ReportRow:
        return cls(run.cell.k_rel, run.cell.d_e2e, str(run.seed), len(run.records),
                   run.accepted, run.limit_count, run.cpu_utilization_pct,
                   run.bw_utilization_pct, run.acceptance_pct,
                   run.mean_solver_s if wall_clock else None)

    def as_strings(self) -> list[str]:
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                out.append("")
            elif isinstance(value, float):
                out.append(repr(value))
            else:
                out.append(str(value))
        return out


def mean_row(rows: list[ReportRow]) -> ReportRow:
    def avg(name):
        vals = [getattr(r, name) for r in rows]
        if any(v is None for v in vals):
            return None
        return math.fsum(float(v) for v in vals) / len(vals)

    first = rows[0]
    return ReportRow(first.k_rel, first.d_e2e_ms, "mean", *(avg(n) for n in AVERAGED))


def rows_for(results: list[CellResult], wall_clock: bool = True) -> list[ReportRow]:
    rows = []
    for cell in results:
        if cell.failed:
            continue
        per_seed = [ReportRow.from_run(run, wall_clock) for run in cell.runs]
        rows.extend(per_seed)
        rows.append(mean_row(per_seed))
    return rows


def to_csv(rows: list[ReportRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow(row.as_strings())
    return buf.getvalue()


def _count(text: str) -> int | float:
    # per-seed rows hold integers, mean rows hold floats
    return int(text) if text.isdigit() else float(text)


def read_csv(text: str) -> list[ReportRow]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != COLUMNS:
        raise ValueError(f"unexpected header {reader.fieldnames}")
    rows = []
    for rec in reader:
        solver = rec["mean_solver_s"]
        rows.append(ReportRow(
            int(rec["k_rel"]), float(rec["d_e2e_ms"]), rec["seed"],
            _count(rec["requests"]), _count(rec["accepted"]), _count(rec["limit_events"]),
            float(rec["cpu_util_pct"]), float(rec["bw_util_pct"]),
            float(rec["acceptance_pct"]), float(solver) if solver else None))
    return rows


def reaggregate(rows: list[ReportRow]) -> list[ReportRow]:
    """Recompute mean rows from the per-seed rows of a parsed results file."""
    groups: dict[tuple, list[ReportRow]] = {}
    for row in rows:
        if row.seed != "mean":
            groups.setdefault((row.k_rel, row.d_e2e_ms), []).append(row)
    return [mean_row(g) for g in groups.values()]


def _num(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.6f}"


def event_lines(run: RunMetrics, wall_clock: bool = True) -> list[str]:
    out = []
    for rec in run.records:
        wall = f"{rec.wall_time:.6f}" if wall_clock else "-"
        out.append(f"req={rec.request_id} cell={run.cell.label} seed={run.seed} "
                   f"status={rec.status} obj={_num(rec.objective)} "
                   f"delay={_num(rec.realized_delay)} wall={wall}")
    return out


def events_log(results: list[CellResult], wall_clock: bool = True) -> str:
    lines = []
    for cell in results:
        if cell.failed:
            lines.append(f"cell={cell.cell.label} status=failed error={cell.error}")
            continue
        for run in cell.runs:
            lines.extend(event_lines(run, wall_clock))
    return "\n".join(lines) + ("\n" if lines else "")


def timings_csv(results: list[CellResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("k_rel", "d_e2e_ms", "seed", "request", "status", "wall_s",
                     "branch_nodes", "lp_iterations"))
    for cell in results:
        for run in cell.runs:
            for rec in run.records:
                if rec.solved:
                    writer.writerow((run.cell.k_rel, repr(run.cell.d_e2e), run.seed,
                                     rec.request_id, rec.status, f"{rec.wall_time:.6f}",
                                     rec.branch_nodes, rec.lp_iterations))
    return buf.getvalue()
