"""Heisenberg VQE on a small grid: DMRG-initialized circuits against a near-identity start.

    python scripts/vqe_heisenberg.py --rows 2 --cols 2 --layers 2 --chis 2 4
"""

import argparse
from pathlib import Path

from tn2pqc.experiments import ExperimentConfig, emit_artifacts, median_final_loss, run_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--rows", type=int, default=2)
    p.add_argument("--cols", type=int, default=2)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--chis", type=int, nargs="+", default=[2, 4])
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--out", default="runs/vqe")
    args = p.parse_args()

    base = ExperimentConfig(task="heisenberg", rows=args.rows, cols=args.cols, k=args.layers,
                            repetitions=args.reps, max_iterations=args.iterations)
    records = []
    for cfg in [base.replace(init="mps", chi=c) for c in args.chis] + [base.replace(init="near-identity")]:
        runs = run_experiment(cfg)
        records.extend(runs)
        print(f"{runs[0].run_id.rsplit('-rep', 1)[0]:>28}: median dE {median_final_loss(runs):.3e}")
    emit_artifacts(records, Path(args.out))


if __name__ == "__main__":
    main()
