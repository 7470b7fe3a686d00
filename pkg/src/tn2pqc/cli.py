"""Command line entry point.

Every subcommand reads an optional JSON config; explicit flags override its keys.
Exit codes: 0 success, 2 configuration error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np

from .decompose import decompose_mps
from .errors import ConfigurationError, Tn2PqcError
from .experiments import (
    ExperimentConfig,
    emit_artifacts,
    run_experiment,
    run_gradient_variance,
    task_dataset,
    write_table_csv,
)
from .ground_state import dmrg_ground_state, exact_ground_energy, heisenberg_mpo
from .mps import MPS
from .tasks import heisenberg_terms
from .tnbm import TnbmConfig, train_tnbm

log = logging.getLogger("tn2pqc")

# flag name -> config key
OVERRIDES = {
    "seed": "seed",
    "out": "out",
    "reps": "repetitions",
    "task": "task",
    "n": "n",
    "c": "c",
    "rows": "rows",
    "cols": "cols",
    "layers": "k",
    "chi": "chi",
    "init": "init",
    "iterations": "max_iterations",
    "workers": "workers",
}


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(2)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=str, help="output directory")
    p.add_argument("--reps", type=int, help="repetitions")
    p.add_argument("--task", choices=("cardinality", "bas", "heisenberg"))
    p.add_argument("--n", type=int, help="number of qubits (cardinality task)")
    p.add_argument("--c", type=int, help="cardinality (default n/2)")
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--layers", type=int, help="circuit layers k")
    p.add_argument("--chi", type=int, help="MPS bond dimension")
    p.add_argument("--init", choices=("random", "near-identity", "mps"))
    p.add_argument("--iterations", type=int, help="CMA-ES iteration cap")
    p.add_argument("--workers", type=int)
    p.add_argument("--linear-final", action="store_true", help="keep the final layer linear")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="tn2pqc", description="MPS-initialized parametrized circuit experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)
    for name, text in [
        ("train-tnbm", "train an MPS Born machine on a dataset"),
        ("ground-state", "DMRG ground state of the Heisenberg grid"),
        ("train-qcbm", "train circuit Born machines with CMA-ES"),
        ("train-vqe", "train Heisenberg VQE circuits with CMA-ES"),
        ("grad-variance", "variance of the YY-angle gradient against qubit count"),
        ("synergy", "MPS training, decomposition and circuit training"),
    ]:
        _common(sub.add_parser(name, help=text))
    p = sub.add_parser("decompose", help="decompose a stored MPS into linear layers")
    _common(p)
    p.add_argument("--mps", type=Path, required=True, help="MPS container file")
    p.add_argument("--fidelity", type=float, default=1.0, help="target fidelity")
    p.add_argument("--sweeps", type=int, default=10, help="optimization sweeps per layer")
    return parser


def load_config(args, **defaults) -> ExperimentConfig:
    doc = ExperimentConfig.load(args.config).to_dict() if args.config is not None else {}
    for key, value in defaults.items():
        doc.setdefault(key, value)
    for flag, key in OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            doc[key] = value
    if getattr(args, "linear_final", False):
        doc["final_all_to_all"] = False
    task = doc.get("task", "cardinality")
    if task in ("bas", "heisenberg"):
        # n follows the grid unless given explicitly
        if args.n is None:
            doc["n"] = None
        if task == "heisenberg":
            doc["rows"] = doc.get("rows") or 2
            doc["cols"] = doc.get("cols") or 2
    elif doc.get("n") is None:
        doc["n"] = 8
    return ExperimentConfig.from_dict(doc)


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1) + "\n")


def _history_csv(path: Path, run_id: str, values: List[float]) -> None:
    lines = ["run_id,iteration,loss"] + [f"{run_id},{i},{v:.17g}" for i, v in enumerate(values)]
    path.write_text("\n".join(lines) + "\n")


def cmd_train_tnbm(args) -> int:
    cfg = load_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = task_dataset(cfg)
    started = time.perf_counter()
    mps, history = train_tnbm(ds, TnbmConfig(cfg.tnbm_eta, cfg.tnbm_sweeps, cfg.chi, seed=cfg.seed))
    mps.save(out / "mps.bin")
    ds.save(out / "dataset.txt")
    _history_csv(out / "losses.csv", "tnbm", history)
    _write_json(
        out / "run.json",
        {"config": cfg.to_dict(), "final_loss": history[-1], "bond_dims": mps.bond_dims,
         "wall_time": time.perf_counter() - started},
    )
    print(f"KL {history[-1]:.6f} after {len(history) - 1} sweeps, bonds {mps.bond_dims}")
    return 0


def cmd_ground_state(args) -> int:
    cfg = load_config(args, task="heisenberg")
    if cfg.task != "heisenberg":
        raise ConfigurationError("ground-state needs task 'heisenberg'")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    h = heisenberg_terms(cfg.rows, cfg.cols)
    res = dmrg_ground_state(heisenberg_mpo(cfg.rows, cfg.cols), cfg.chi, cfg.dmrg_sweeps, np.random.default_rng(cfg.seed))
    e0 = float(exact_ground_energy(h)[0])
    res.mps.save(out / "mps.bin")
    (out / "hamiltonian.json").write_text(h.to_json() + "\n")
    _history_csv(out / "energies.csv", "dmrg", res.energy_history)
    _write_json(
        out / "run.json",
        {"config": cfg.to_dict(), "energy": res.energy, "exact_energy": e0, "energy_error": res.energy - e0,
         "wall_time": time.perf_counter() - started},
    )
    print(f"E = {res.energy:.12f}  exact {e0:.12f}  error {res.energy - e0:.3e}")
    return 0


def cmd_decompose(args) -> int:
    if args.layers is None:
        raise ConfigurationError("decompose needs --layers")
    out = Path(args.out or "runs")
    out.mkdir(parents=True, exist_ok=True)
    try:
        mps = MPS.load(args.mps)
    except OSError as exc:
        raise ConfigurationError(f"cannot read MPS file {args.mps}: {exc}") from exc
    res = decompose_mps(mps.normalized(), args.layers, args.fidelity, args.sweeps)
    res.circuit.save(out / "circuit.json")
    lines = ["layers,fidelity"] + [f"{k},{f:.17g}" for k, f in enumerate(res.layer_fidelities, start=1)]
    (out / "fidelity.csv").write_text("\n".join(lines) + "\n")
    _write_json(out / "run.json", {"mps": str(args.mps), "layers": res.stack.depth, "fidelity": res.fidelity,
                                   "converged": res.converged})
    if not res.converged:
        print(f"warning: target fidelity {args.fidelity} not reached", file=sys.stderr)
    print(f"{res.stack.depth} layers, fidelity {res.fidelity:.10f}")
    return 0


def _train(cfg: ExperimentConfig) -> int:
    records = run_experiment(cfg)
    emit_artifacts(records, cfg.out)
    for rec in records:
        extra = "" if rec.mps_loss is None else f"  mps {rec.mps_loss:.6f}  decomposition {rec.decomposition_fidelity:.6f}"
        print(f"{rec.run_id}: initial {rec.initial_loss:.6f}  final {rec.final_loss:.6f}{extra}")
        for w in rec.warnings:
            print(f"warning: {rec.run_id}: {w}", file=sys.stderr)
    return 0


def cmd_train_qcbm(args) -> int:
    cfg = load_config(args)
    if cfg.is_vqe:
        raise ConfigurationError("train-qcbm needs a dataset task (cardinality or bas)")
    return _train(cfg)


def cmd_train_vqe(args) -> int:
    cfg = load_config(args, task="heisenberg")
    if not cfg.is_vqe:
        raise ConfigurationError("train-vqe needs task 'heisenberg'")
    return _train(cfg)


def cmd_synergy(args) -> int:
    if args.init not in (None, "mps"):
        raise ConfigurationError("synergy always uses MPS initialization")
    args.init = "mps"
    return _train(load_config(args))


def cmd_grad_variance(args) -> int:
    cfg = load_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_gradient_variance(cfg)
    write_table_csv(rows, out / "grad_variance.csv")
    _write_json(out / "run.json", {"config": cfg.to_dict(), "rows": rows})
    for r in rows:
        print(f"N={r['n']:3d}  var {r['variance']:.4e}  [{r['ci_low']:.4e}, {r['ci_high']:.4e}]")
    return 0


COMMANDS = {
    "train-tnbm": cmd_train_tnbm,
    "ground-state": cmd_ground_state,
    "decompose": cmd_decompose,
    "train-qcbm": cmd_train_qcbm,
    "train-vqe": cmd_train_vqe,
    "synergy": cmd_synergy,
    "grad-variance": cmd_grad_variance,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (Tn2PqcError, OSError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
