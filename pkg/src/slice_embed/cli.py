"""Command-line front end: ``slice-embed {run,sweep,oracle-check,export-lp}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import report
from .admission import SweepCell, state_before, sweep
from .config import ConfigError, LoadedConfig, load_config
from .formulation import build_problem, write_lp
from .oracle import oracle_check

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2
EXIT_MISMATCH = 3

log = logging.getLogger("slice_embed")


def _setup_logging():
    level = os.environ.get("SLICE_EMBED_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _apply_overrides(loaded: LoadedConfig, args) -> LoadedConfig:
    exp = loaded.experiment
    cells = exp.sweep
    if args.k_rel is not None:
        cells = [SweepCell(args.k_rel, d) for d in dict.fromkeys(c.d_e2e for c in cells)]
    if args.d_e2e is not None:
        cells = [SweepCell(k, args.d_e2e) for k in dict.fromkeys(c.k_rel for c in cells)]
    exp = replace(exp, sweep=cells)
    if args.seed is not None:
        exp = replace(exp, seeds=[args.seed])
    if args.bound_mode is not None:
        exp = replace(exp, bound_mode=args.bound_mode)
    if args.delay_mode is not None:
        exp = replace(exp, delay_mode=args.delay_mode)
    if getattr(args, "requests", None) is not None:
        exp = replace(exp, workload=replace(exp.workload, request_count=args.requests))
    out = Path(args.out) if args.out else loaded.out_dir
    exp.validate()
    return replace(loaded, experiment=exp, out_dir=out)


def _load(args) -> LoadedConfig:
    return _apply_overrides(load_config(args.config), args)


def cmd_run(args, summary: bool = False) -> int:
    try:
        loaded = _load(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    results = sweep(loaded.experiment)
    out = loaded.out_dir
    out.mkdir(parents=True, exist_ok=True)
    rows = report.rows_for(results, loaded.wall_clock)
    (out / "results.csv").write_text(report.to_csv(rows), encoding="utf-8")
    (out / "events.log").write_text(report.events_log(results, loaded.wall_clock),
                                    encoding="utf-8")
    (out / "timings.csv").write_text(report.timings_csv(results), encoding="utf-8")
    failed = [c for c in results if c.failed]
    for cell in failed:
        print(f"error: cell {cell.cell.label} failed: {cell.error}", file=sys.stderr)
    limits = sum(run.limit_count for c in results for run in c.runs)
    if limits:
        print(f"warning: {limits} request(s) hit the solver node limit", file=sys.stderr)
    if summary:
        print(f"{'K_rel':>5} {'d_E2E':>7} {'cpu%':>7} {'bw%':>7} {'acc%':>7}")
        for row in rows:
            if row.seed == "mean":
                print(f"{row.k_rel:>5} {row.d_e2e_ms:>7g} {row.cpu_util_pct:>7.2f} "
                      f"{row.bw_util_pct:>7.2f} {row.acceptance_pct:>7.2f}")
    print(f"wrote {out / 'results.csv'}")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_oracle_check(args) -> int:
    rep = oracle_check(args.count, args.seed, args.max_servers, args.max_vnfs,
                       out_dir=Path(args.out))
    print(rep.summary())
    for path in rep.failures:
        print(f"mismatch written to {path}", file=sys.stderr)
    return EXIT_MISMATCH if rep.mismatches else EXIT_OK


def cmd_export_lp(args) -> int:
    try:
        loaded = _load(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    exp = loaded.experiment
    try:
        network, request, delays = state_before(exp, args.index)
    except IndexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = write_lp(build_problem(network, request, delays))
    out = loaded.out_dir
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"request_{args.index}.lp"
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path}")
    return EXIT_OK


def _experiment_flags(p):
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--k-rel", type=int)
    p.add_argument("--d-e2e", type=float)
    p.add_argument("--bound-mode", choices=("cpu", "bw"))
    p.add_argument("--delay-mode", choices=("recompute", "frozen"))
    p.add_argument("--requests", type=int, help="override workload.request_count")
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slice-embed", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _experiment_flags(sub.add_parser("run", help="run the configured experiment"))
    _experiment_flags(sub.add_parser("sweep", help="run the sweep and print a summary table"))

    p = sub.add_parser("oracle-check", help="compare the MILP solver with brute force")
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-servers", type=int, default=5)
    p.add_argument("--max-vnfs", type=int, default=3)
    p.add_argument("--out", default="oracle_failures")

    p = sub.add_parser("export-lp", help="write one request's MILP as an LP file")
    _experiment_flags(p)
    p.add_argument("--index", type=int, required=True)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "sweep":
        return cmd_run(args, summary=True)
    if args.command == "oracle-check":
        return cmd_oracle_check(args)
    return cmd_export_lp(args)


if __name__ == "__main__":
    sys.exit(main())
