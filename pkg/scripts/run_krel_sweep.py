"""K_rel sweep in both bound regimes; prints acceptance/utilization per K_rel.

    python3 scripts/run_krel_sweep.py [--cpu CFG] [--bw CFG] [--out DIR]
"""

import argparse
import math
from pathlib import Path

from slice_embed import report
from slice_embed.admission import sweep
from slice_embed.config import load_config

ROOT = Path(__file__).resolve().parent.parent


def means(results):
    out = {}
    for cell in results:
        n = len(cell.runs)
        out[cell.cell.k_rel] = tuple(
            math.fsum(getattr(r, a) for r in cell.runs) / n
            for a in ("acceptance_pct", "cpu_utilization_pct", "bw_utilization_pct"))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cpu", default=str(ROOT / "configs" / "desk_cpu.cfg"))
    ap.add_argument("--bw", default=str(ROOT / "configs" / "desk_bw.cfg"))
    ap.add_argument("--out", default="results/krel")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = {}
    for regime, path in (("cpu", args.cpu), ("bw", args.bw)):
        loaded = load_config(path)
        results = sweep(loaded.experiment)
        (out / f"{regime}.csv").write_text(report.to_csv(report.rows_for(results, False)))
        table[regime] = means(results)
    print(f"{'K_rel':>5} | {'acc% cpu':>9} {'cpu%':>7} {'bw%':>6} | {'acc% bw':>8} {'cpu%':>7} {'bw%':>6}")
    for k in sorted(table["cpu"]):
        c, b = table["cpu"][k], table["bw"].get(k, (math.nan,) * 3)
        print(f"{k:>5} | {c[0]:>9.2f} {c[1]:>7.2f} {c[2]:>6.2f} | {b[0]:>8.2f} {b[1]:>7.2f} {b[2]:>6.2f}")


if __name__ == "__main__":
    main()
