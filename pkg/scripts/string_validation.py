"""GIMH on the point-indel string model with simulated pairs.

Generating values lambda_pt = 2, mu_pt = 0.5, T = 0.3, 200 pairs, SSM moves
off, Exponential(1) priors. Writes the chain, prefix quantiles and a
summary under --out.

    python scripts/string_validation.py --particles 256 --iterations 1500
"""
import argparse
import json
import time
from pathlib import Path

import numpy as np

from tips.experiments import STRING_TRUTH, string_validation
from tips.gimh import initial_positive_sequence_ess, prefix_quantiles


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--particles", type=int, default=256)
    ap.add_argument("--iterations", type=int, default=1500)
    ap.add_argument("--burn-in", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--data-seed", type=int, default=1)
    ap.add_argument("--alpha", type=float, default=0.8)
    ap.add_argument("--beta", type=float, default=0.95)
    ap.add_argument("--out", default="results/string_validation")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    trace = open(out / "trace.csv", "w")
    trace.write("iter,accepted,log_z," + ",".join(STRING_TRUTH) + "\n")

    def progress(rec):
        trace.write(f"{rec.iteration},{int(rec.accepted)},{rec.log_z!r},"
                    + ",".join(repr(rec.theta[k]) for k in STRING_TRUTH) + "\n")
        trace.flush()
        if rec.iteration % 50 == 0:
            print(f"iter {rec.iteration}  {time.time() - t0:7.0f}s  "
                  + "  ".join(f"{k}={v:.3f}" for k, v in rec.theta.items()), flush=True)

    res = string_validation(args.particles, args.iterations, args.seed, args.data_seed,
                            alpha=args.alpha, beta=args.beta, burn_in=args.burn_in, progress=progress)
    trace.close()
    summary = {
        "settings": vars(args),
        "passed": res.passed,
        "acceptance_rate": res.acceptance_rate,
        "minutes": res.seconds / 60,
        "parameters": {
            k: {"truth": STRING_TRUTH[k], "interval95": res.intervals[k], "covered": res.covered[k],
                "median_drift_over_iqr": res.drift[k],
                "ess": initial_positive_sequence_ess(np.array(res.chain[k])),
                "prefix_quantiles": prefix_quantiles(res.chain[k], 20)}
            for k in STRING_TRUTH
        },
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    for k, p in summary["parameters"].items():
        print(f"{k}: 95% CI ({p['interval95'][0]:.3f}, {p['interval95'][1]:.3f}) truth {p['truth']} "
              f"covered={p['covered']} drift={p['median_drift_over_iqr']:.3f} ess={p['ess']:.0f}")
    print("PASS" if res.passed else "FAIL", f"acceptance {res.acceptance_rate:.2f}",
          f"{res.seconds / 60:.1f} min")


if __name__ == "__main__":
    main()
