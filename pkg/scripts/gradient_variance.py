"""Gradient variance of the first YY angle against qubit count, random vs MPS start.

    python scripts/gradient_variance.py --ns 4 8 12 16 --reps 200 --mps-reps 50
"""

import argparse
import logging
from pathlib import Path

from tn2pqc.experiments import ExperimentConfig, log_variance_slope, run_gradient_variance, write_table_csv


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--ns", type=int, nargs="+", default=[4, 8, 12, 16])
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--mps-reps", type=int, default=50)
    p.add_argument("--chi", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/variance")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO)

    base = ExperimentConfig(n=min(args.ns), k=args.layers, final_all_to_all=False, gradient_ns=args.ns, seed=args.seed)
    rows = run_gradient_variance(base.replace(init="random", repetitions=args.reps))
    print(f"random: log-variance slope {log_variance_slope(rows):.3f}")
    mps_rows = run_gradient_variance(base.replace(init="mps", chi=args.chi, repetitions=args.mps_reps))
    print(f"mps-chi{args.chi}: log-variance slope {log_variance_slope(mps_rows):.3f}")
    rows += mps_rows
    for r in rows:
        print(f"{r['init']:>10} N={r['n']:2d} var {r['variance']:.3e} [{r['ci_low']:.3e}, {r['ci_high']:.3e}]")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_table_csv(rows, out / "grad_variance.csv")


if __name__ == "__main__":
    main()
