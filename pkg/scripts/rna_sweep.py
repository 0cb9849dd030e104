"""TIPS vs forward sampling on the enumerated 12-mer RNA instance.

Grid: K in 5^1..5^6, T in 0.125..8 (doubling), 30 replicates, tuning
schedule alpha = 2/3, beta = max(0.25, 1 - T/16). Writes one CSV row per
cell and prints, per horizon, the smallest K whose median absolute log
error is below 1, plus the weight-variance ratio at the shortest horizon.

    python scripts/rna_sweep.py --replicates 30 --out results/rna_sweep.csv
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from tips.estimator import SWEEP_COLUMNS, estimate_comparison_sweep, min_particles_for_accuracy
from tips.experiments import PARTICLE_GRID, RNA_12MER, RNA_HORIZONS, rna_instance
from tips.proposal import ProposalConfig
from tips.rna import hamming, rna_tuning_schedule, to_dot_bracket


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sequence", default=RNA_12MER)
    ap.add_argument("--replicates", type=int, default=30)
    ap.add_argument("--max-power", type=int, default=6)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--out", default="results/rna_sweep.csv")
    args = ap.parse_args()

    inst = rna_instance(args.sequence)
    n = len(args.sequence)
    print(f"{args.sequence}: {len(inst.space)} structures, "
          f"{to_dot_bracket(inst.start, n)} -> {to_dot_bracket(inst.target, n)}")
    grid = [k for k in PARTICLE_GRID if k <= 5 ** args.max_power]
    rows = estimate_comparison_sweep(inst.model, hamming(), inst.start, inst.target, RNA_HORIZONS, grid,
                                     args.replicates, config=lambda h: ProposalConfig(*rna_tuning_schedule(h)),
                                     exact=inst.exact, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, SWEEP_COLUMNS)
        w.writeheader()
        w.writerows(rows)

    print(f"{'T':>6} {'exact':>10} {'tips K':>7} {'fs K':>7}")
    for h in RNA_HORIZONS:
        tk = min_particles_for_accuracy(rows, "tips", h)
        fk = min_particles_for_accuracy(rows, "fs", h)
        print(f"{h:6g} {inst.exact(h):10.3e} {str(tk):>7} {str(fk):>7}")

    h, k = RNA_HORIZONS[0], grid[-1]
    var = {m: np.array([r["weight_variance"] for r in rows
                        if r["method"] == m and r["horizon"] == h and r["particles"] == k])
           for m in ("tips", "fs")}
    print(f"T={h:g}, K={k}: tips variance lower in {int(np.sum(var['tips'] < var['fs']))}/{len(var['fs'])} "
          f"replicates, median fs/tips ratio {np.median(var['fs'] / var['tips']):.1f}")


if __name__ == "__main__":
    main()
