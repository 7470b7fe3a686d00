"""Train cardinality QCBMs from four initializations and compare final KL.

    python scripts/compare_initializations.py --n 8 --reps 3 --iterations 2000 --out runs/inits
"""

import argparse
import logging
from pathlib import Path

from tn2pqc.experiments import ExperimentConfig, best_final_loss, emit_artifacts, run_experiment

INITS = [("mps", 4), ("mps", 2), ("near-identity", None), ("random", None)]


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/inits")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO)

    base = ExperimentConfig(n=args.n, k=args.layers, repetitions=args.reps, max_iterations=args.iterations, seed=args.seed)
    records = []
    for init, chi in INITS:
        cfg = base.replace(init=init, chi=chi or base.chi)
        runs = run_experiment(cfg)
        records.extend(runs)
        label = f"{init}-chi{chi}" if chi else init
        print(f"{label:>14}: best final KL {best_final_loss(runs):.5f}")
    emit_artifacts(records, Path(args.out))


if __name__ == "__main__":
    main()
