"""d_E2E sweep: mean CPU utilization and acceptance per (K_rel, d_E2E).

    python3 scripts/run_e2e_sweep.py [--config CFG] [--out DIR]
"""

import argparse
import math
from pathlib import Path

from slice_embed import report
from slice_embed.admission import sweep
from slice_embed.config import load_config

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "desk_e2e.cfg"))
    ap.add_argument("--out", default="results/e2e")
    args = ap.parse_args()
    results = sweep(load_config(args.config).experiment)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(report.to_csv(report.rows_for(results, False)))
    budgets = sorted({c.cell.d_e2e for c in results})
    print("K_rel  " + " ".join(f"{d:>7g}" for d in budgets) + "   (mean CPU utilization %)")
    by_cell = {c.cell: c for c in results}
    for k in sorted({c.cell.k_rel for c in results}):
        vals = []
        for d in budgets:
            runs = by_cell[type(results[0].cell)(k, d)].runs
            vals.append(math.fsum(r.cpu_utilization_pct for r in runs) / len(runs))
        print(f"{k:>5}  " + " ".join(f"{v:>7.2f}" for v in vals))


if __name__ == "__main__":
    main()
