"""Experiment runner: MPS-initialized and baseline circuit training, gradient
variance sweeps, bootstrap statistics and artifact files."""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .circuit import (
    ALL_TO_ALL,
    LINEAR,
    PARAMS_PER_GATE,
    YY_INDEX,
    ParamCircuit,
    build_circuit,
    init_params,
    simulate_batch,
)
from .decompose import decompose_mps
from .errors import ConfigurationError
from .ground_state import dmrg_ground_state, exact_ground_energy, heisenberg_mpo
from .mps import MPS
from .optimizers import CmaesConfig, cmaes_minimize, finite_diff_gradient
from .tasks import (
    Dataset,
    bas_dataset,
    cardinality_dataset,
    energy_batch,
    heisenberg_terms,
    kl_divergence_batch,
)
from .tnbm import TnbmConfig, train_tnbm

log = logging.getLogger(__name__)

TASKS = ("cardinality", "bas", "heisenberg")
INITS = ("random", "near-identity", "mps")
# CMA-ES step sizes for MPS-initialized VQE runs, by bond dimension
VQE_MPS_SIGMA = {2: 7.5e-3, 4: 5e-3, 8: 2.5e-3}
DECOMPOSITION_TARGET = 1 - 1e-10


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "cardinality"
    n: Optional[int] = None
    c: Optional[int] = None
    rows: Optional[int] = None
    cols: Optional[int] = None
    k: int = 3
    final_all_to_all: bool = True
    init: str = "mps"
    chi: int = 4
    near_identity_sigma: float = 0.01
    extension_sigma: Optional[float] = None
    tnbm_eta: float = 0.01
    tnbm_sweeps: int = 50
    dmrg_sweeps: int = 10
    decompose_sweeps: int = 10
    cmaes_sigma: Optional[float] = None
    cmaes_lambda: int = 20
    max_iterations: int = 2000
    tolfun: float = 5e-4
    repetitions: int = 1
    seed: int = 0
    out: str = "runs"
    workers: int = 1
    gradient_ns: Tuple[int, ...] = (4, 8, 12)
    gradient_epsilon: float = 1e-8
    bootstrap_resamples: int = 1000

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigurationError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.init not in INITS:
            raise ConfigurationError(f"unknown init {self.init!r}; expected one of {INITS}")
        if self.task in ("bas", "heisenberg"):
            if self.rows is None or self.cols is None:
                raise ConfigurationError(f"task {self.task} needs rows and cols")
            if self.n is not None and self.n != self.rows * self.cols:
                raise ConfigurationError(f"n={self.n} does not equal rows*cols={self.rows * self.cols}")
            object.__setattr__(self, "n", self.rows * self.cols)
        elif self.n is None or self.n < 2:
            raise ConfigurationError("cardinality task needs n >= 2")
        if self.k < 1:
            raise ConfigurationError("circuits need at least one layer (k >= 1)")
        if self.chi < 1:
            raise ConfigurationError("chi must be at least 1")
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be at least 1")
        if self.max_iterations < 0:
            raise ConfigurationError("max_iterations must be non-negative")
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1")
        if self.near_identity_sigma < 0 or (self.extension_sigma is not None and self.extension_sigma < 0):
            raise ConfigurationError("initialization widths must be non-negative")
        object.__setattr__(self, "gradient_ns", tuple(int(v) for v in self.gradient_ns))
        # constructing these validates lambda, sigma and tolfun early
        self.cmaes_config(0)

    # ------------------------------------------------------------- accessors

    @property
    def cardinality(self) -> int:
        return self.n // 2 if self.c is None else self.c

    @property
    def is_vqe(self) -> bool:
        return self.task == "heisenberg"

    @property
    def extension_width(self) -> float:
        if self.extension_sigma is not None:
            return self.extension_sigma
        return 0.0 if self.is_vqe else self.near_identity_sigma

    @property
    def cma_sigma(self) -> float:
        if self.cmaes_sigma is not None:
            return self.cmaes_sigma
        if self.is_vqe and self.init == "mps":
            return VQE_MPS_SIGMA.get(self.chi, 1e-2)
        return 1e-2

    def cmaes_config(self, seed: int) -> CmaesConfig:
        return CmaesConfig(self.cma_sigma, self.cmaes_lambda, self.max_iterations, self.tolfun, seed)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["gradient_ns"] = list(self.gradient_ns)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigurationError(f"config {path} must be a JSON object")
        return cls.from_dict(doc)


@dataclass
class RunRecord:
    run_id: str
    config: dict
    seed: int
    loss_history: List[float]
    initial_loss: float
    final_loss: float
    wall_time: float
    evaluations: int
    num_params: int
    num_gates: int
    mps_loss: Optional[float] = None
    decomposition_fidelity: Optional[float] = None
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ------------------------------------------------------------------ seeding


def repetition_seed(master: int, rep: int) -> int:
    """Seed of repetition ``rep``, independent of how many repetitions run."""
    return int(np.random.SeedSequence(master, spawn_key=(rep,)).generate_state(1, np.uint32)[0])


# -------------------------------------------------------------- objectives


def task_dataset(config: ExperimentConfig) -> Dataset:
    if config.task == "cardinality":
        return cardinality_dataset(config.n, config.cardinality)
    if config.task == "bas":
        return bas_dataset(config.rows, config.cols)
    raise ConfigurationError(f"task {config.task} has no dataset")


class CircuitObjective:
    """Vectorized loss of a parameter batch; counts every circuit evaluation.

    QCBM tasks return the KL divergence, the Heisenberg task the energy error
    ``E - E0``.
    """

    def __init__(self, config: ExperimentConfig, circuit: ParamCircuit):
        self.circuit = circuit
        self.evaluations = 0
        if config.is_vqe:
            h = heisenberg_terms(config.rows, config.cols)
            self.h_matrix = h.to_sparse()
            self.e0 = float(exact_ground_energy(h)[0])
            self.dataset = None
        else:
            self.dataset = task_dataset(config)

    def __call__(self, params: np.ndarray) -> np.ndarray:
        params = np.atleast_2d(params)
        self.evaluations += params.shape[0]
        psis = simulate_batch(self.circuit, params)
        if self.dataset is None:
            return energy_batch(psis, self.h_matrix) - self.e0
        return kl_divergence_batch(np.abs(psis) ** 2, self.dataset)

    def single(self, params: np.ndarray) -> float:
        return float(self(params)[0])


# ------------------------------------------------------------ initialization


def train_mps(config: ExperimentConfig, seed: int) -> Tuple[MPS, float]:
    """Classical model for the task and its loss (KL, or energy error)."""
    if config.is_vqe:
        mpo = heisenberg_mpo(config.rows, config.cols)
        res = dmrg_ground_state(mpo, config.chi, config.dmrg_sweeps, np.random.default_rng(seed))
        e0 = float(exact_ground_energy(heisenberg_terms(config.rows, config.cols))[0])
        return res.mps, res.energy - e0
    ds = task_dataset(config)
    tcfg = TnbmConfig(eta=config.tnbm_eta, sweeps=config.tnbm_sweeps, chi_max=config.chi, seed=seed)
    mps, history = train_tnbm(ds, tcfg)
    return mps, history[-1]


def mps_circuit_params(
    config: ExperimentConfig, mps: MPS, rng: np.random.Generator
) -> Tuple[ParamCircuit, np.ndarray, float, bool]:
    """Decompose ``mps`` into at most ``k`` linear layers and embed them in the
    experiment circuit.

    Layers the decomposition does not need are filled with near-identity gates
    after the decomposed ones, and the extra pairs of an all-to-all final layer
    get near-identity gates of width ``extension_width``. Returns the circuit
    (carrying the decomposed gate phases), its parameters, the decomposition
    fidelity and the converged flag.
    """
    res = decompose_mps(mps, config.k, DECOMPOSITION_TARGET, config.decompose_sweeps)
    template = build_circuit(config.n, config.k, config.final_all_to_all)
    width = config.extension_width
    params = init_params(template, "near-identity", width, rng).reshape(-1, PARAMS_PER_GATE)
    phases = np.zeros(template.num_gates)
    decomposed = {}
    for li, layer in enumerate(res.circuit.layers):
        for g in layer.gates:
            decomposed[(li, g.qubits)] = g
    offset = 0
    for li, layer in enumerate(template.layers):
        for gi, g in enumerate(layer.gates):
            src = decomposed.get((li, g.qubits))
            if src is not None:
                params[offset + gi] = src.theta
                phases[offset + gi] = src.phase
        offset += len(layer.gates)
    circuit = template.with_params(params.reshape(-1))
    for g, ph in zip(circuit.gates, phases):
        g.phase = float(ph)
    return circuit, circuit.params, res.fidelity, res.converged


def baseline_circuit_params(config: ExperimentConfig, rng: np.random.Generator) -> Tuple[ParamCircuit, np.ndarray]:
    circuit = build_circuit(config.n, config.k, config.final_all_to_all)
    if config.init == "random":
        params = init_params(circuit, "random", rng=rng)
    else:
        params = init_params(circuit, "near-identity", config.near_identity_sigma, rng)
    return circuit.with_params(params), params


# ------------------------------------------------------------------ runners


def _run_id(config: ExperimentConfig, rep: int) -> str:
    tag = f"mps-chi{config.chi}" if config.init == "mps" else config.init
    return f"{config.task}-{tag}-rep{rep}"


def _train(config, circuit, theta0, seed, run_id, started, **extra) -> RunRecord:
    objective = CircuitObjective(config, circuit)
    initial = objective.single(theta0)
    best, history, state = cmaes_minimize(objective, theta0, config.cmaes_config(seed), vectorized=True)
    final = objective.single(best) if history else initial
    cma_evals = state.iteration * config.cmaes_lambda
    # one extra evaluation each for the initial and final loss
    if objective.evaluations != cma_evals + 1 + (1 if history else 0):
        raise RuntimeError("objective evaluation count disagrees with the CMA-ES budget")
    return RunRecord(
        run_id=run_id,
        config=config.to_dict(),
        seed=seed,
        loss_history=[float(v) for v in history],
        initial_loss=initial,
        final_loss=min(final, initial),
        wall_time=time.perf_counter() - started,
        evaluations=cma_evals,
        num_params=circuit.num_params,
        num_gates=circuit.num_gates,
        **extra,
    )


def run_synergy(config: ExperimentConfig, rep: int = 0) -> RunRecord:
    """Train an MPS, map it onto the circuit and continue training with CMA-ES."""
    if config.init != "mps":
        raise ConfigurationError("run_synergy needs init = 'mps'")
    started = time.perf_counter()
    seed = repetition_seed(config.seed, rep)
    rng = np.random.default_rng(seed)
    mps, mps_loss = train_mps(config, seed)
    circuit, theta0, fid, converged = mps_circuit_params(config, mps, rng)
    warnings = [] if converged else [f"decomposition stopped at fidelity {fid:.6f} below target"]
    return _train(
        config, circuit, theta0, seed, _run_id(config, rep), started,
        mps_loss=float(mps_loss), decomposition_fidelity=float(fid), warnings=warnings,
    )


def run_baseline(config: ExperimentConfig, rep: int = 0) -> RunRecord:
    """Same circuit and budget as :func:`run_synergy`, random or near-identity start."""
    if config.init == "mps":
        raise ConfigurationError("run_baseline needs init 'random' or 'near-identity'")
    started = time.perf_counter()
    seed = repetition_seed(config.seed, rep)
    circuit, theta0 = baseline_circuit_params(config, np.random.default_rng(seed))
    return _train(config, circuit, theta0, seed, _run_id(config, rep), started)


def _run_one(args) -> RunRecord:
    config, rep = args
    return run_synergy(config, rep) if config.init == "mps" else run_baseline(config, rep)


def run_experiment(config: ExperimentConfig) -> List[RunRecord]:
    """All repetitions of a config, ordered by repetition index."""
    jobs = [(config, rep) for rep in range(config.repetitions)]
    if config.workers == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(config.workers) as pool:
        return list(pool.map(_run_one, jobs))


# --------------------------------------------------------- gradient variance


def probe_index(circuit: ParamCircuit) -> int:
    """YY angle of the first gate (qubits 0 and 1) of the first layer."""
    return circuit.param_index(0, 0, YY_INDEX)


def gradient_samples(config: ExperimentConfig, n: int) -> np.ndarray:
    """Probe gradients of the KL loss over ``config.repetitions`` initializations."""
    cfg = config.replace(task="cardinality", n=n, c=None, rows=None, cols=None)
    ds = cardinality_dataset(n, n // 2)
    grads = np.empty(cfg.repetitions)
    for rep in range(cfg.repetitions):
        seed = repetition_seed(cfg.seed, rep)
        rng = np.random.default_rng(seed)
        if cfg.init == "mps":
            mps, _ = train_mps(cfg, seed)
            circuit, params, _, _ = mps_circuit_params(cfg, mps, rng)
        else:
            circuit, params = baseline_circuit_params(cfg, rng)

        def loss(theta, circuit=circuit):
            psi = simulate_batch(circuit, theta)
            return float(kl_divergence_batch(np.abs(psi) ** 2, ds)[0])

        grads[rep] = finite_diff_gradient(loss, params, probe_index(circuit), cfg.gradient_epsilon)
    return grads


def bootstrap_statistic(
    samples: Sequence[float],
    statistic: Callable[[np.ndarray], np.ndarray],
    resamples: int = 1000,
    lower_pct: float = 25.0,
    upper_pct: float = 75.0,
    seed: int = 0,
) -> Tuple[float, float, float]:
    """Point estimate and percentile-bootstrap interval of ``statistic`` (applied along axis 1)."""
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size == 0:
        raise ConfigurationError("bootstrap needs at least one sample")
    if resamples < 100:
        raise ConfigurationError("bootstrap needs at least 100 resamples")
    if not 0 <= lower_pct <= upper_pct <= 100:
        raise ConfigurationError("percentiles must satisfy 0 <= lower <= upper <= 100")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, x.size, size=(resamples, x.size))
    stats = statistic(x[idx])
    lo, hi = np.percentile(stats, [lower_pct, upper_pct])
    return float(statistic(x[None, :])[0]), float(lo), float(hi)


def bootstrap_median_ci(samples, resamples=1000, lower_pct=25.0, upper_pct=75.0, seed=0):
    """Median with a percentile-bootstrap interval."""
    return bootstrap_statistic(samples, lambda a: np.median(a, axis=1), resamples, lower_pct, upper_pct, seed)


def _sample_variance(a: np.ndarray) -> np.ndarray:
    return np.var(a, axis=1, ddof=1) if a.shape[1] > 1 else np.zeros(a.shape[0])


def run_gradient_variance(config: ExperimentConfig) -> List[dict]:
    """Variance of the probe gradient for every ``n`` in ``config.gradient_ns``.

    The interval is the 25-75 percentile bootstrap interval of the variance.
    """
    topology = ALL_TO_ALL if config.final_all_to_all else LINEAR
    rows = []
    for n in config.gradient_ns:
        if n < 2:
            raise ConfigurationError("gradient sweeps need n >= 2")
        started = time.perf_counter()
        grads = gradient_samples(config, n)
        var, lo, hi = bootstrap_statistic(grads, _sample_variance, config.bootstrap_resamples, seed=config.seed)
        rows.append(
            {
                "n": n,
                "k": config.k,
                "topology": topology,
                "init": config.init if config.init != "mps" else f"mps-chi{config.chi}",
                "variance": var,
                "ci_low": lo,
                "ci_high": hi,
                "repetitions": config.repetitions,
            }
        )
        log.info("n=%d variance %.3e (%.1fs)", n, var, time.perf_counter() - started)
    return rows


def log_variance_slope(rows: Sequence[dict]) -> float:
    """Least-squares slope of ``log(variance)`` against ``n``."""
    n = np.array([r["n"] for r in rows], dtype=float)
    v = np.log(np.array([r["variance"] for r in rows], dtype=float))
    return float(np.polyfit(n, v, 1)[0])


# ---------------------------------------------------------------- artifacts


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_losses_csv(records: Sequence[RunRecord], path) -> None:
    lines = ["run_id,iteration,loss"]
    for rec in records:
        for it, loss in enumerate(rec.loss_history, start=1):
            lines.append(f"{rec.run_id},{it},{_fmt(loss)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_table_csv(rows: Sequence[dict], path) -> None:
    if not rows:
        raise ConfigurationError("no rows to write")
    keys = list(rows[0])
    lines = [",".join(keys)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row.values()))
    Path(path).write_text("\n".join(lines) + "\n")


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def loss_plot_svg(records: Sequence[RunRecord], width: int = 640, height: int = 400) -> str:
    """Static line chart of loss against iteration with a logarithmic y axis."""
    margin = 50
    curves = [np.asarray(r.loss_history, dtype=float) for r in records]
    positive = np.concatenate([c[c > 0] for c in curves] + [np.array([1.0])])
    y_min, y_max = np.log10(positive.min()), np.log10(positive.max())
    if y_max - y_min < 1e-12:
        y_min, y_max = y_min - 1, y_max + 1
    x_max = max([len(c) for c in curves] + [2])
    floor = 10.0**y_min

    def px(i):
        return margin + (width - 2 * margin) * (i - 1) / max(x_max - 1, 1)

    def py(v):
        return height - margin - (height - 2 * margin) * (np.log10(max(v, floor)) - y_min) / (y_max - y_min)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle" font-size="12">iteration</text>',
        f'<text x="12" y="{margin - 10}" font-size="12">loss (log10 {y_min:.2f} to {y_max:.2f})</text>',
    ]
    for k, (rec, c) in enumerate(zip(records, curves)):
        pts = " ".join(f"{px(i):.2f},{py(v):.2f}" for i, v in enumerate(c, start=1))
        color = _COLORS[k % len(_COLORS)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"><title>{rec.run_id}</title></polyline>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_artifacts(records: Sequence[RunRecord], out_dir, plot: bool = True) -> Dict[str, Path]:
    """Write ``losses.csv``, ``run.json`` and optionally ``plot.svg`` into ``out_dir``."""
    out = Path(out_dir)
    paths = {"losses": out / "losses.csv", "meta": out / "run.json", "plot": out / "plot.svg"}
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_losses_csv(records, paths["losses"])
        meta = [
            {k: v for k, v in rec.to_dict().items() if k != "loss_history"} | {"iterations": len(rec.loss_history)}
            for rec in records
        ]
        paths["meta"].write_text(json.dumps(meta, indent=1, allow_nan=True) + "\n")
        if plot:
            paths["plot"].write_text(loss_plot_svg(records))
        else:
            del paths["plot"]
    except OSError as exc:
        raise OSError(f"cannot write artifacts to {out}: {exc}") from exc
    return paths


def best_final_loss(records: Sequence[RunRecord]) -> float:
    return min(r.final_loss for r in records)


def median_final_loss(records: Sequence[RunRecord]) -> float:
    return float(np.median([r.final_loss for r in records]))


__all__ = [
    "ExperimentConfig",
    "RunRecord",
    "CircuitObjective",
    "repetition_seed",
    "task_dataset",
    "train_mps",
    "mps_circuit_params",
    "baseline_circuit_params",
    "run_synergy",
    "run_baseline",
    "run_experiment",
    "probe_index",
    "gradient_samples",
    "bootstrap_statistic",
    "bootstrap_median_ci",
    "run_gradient_variance",
    "log_variance_slope",
    "write_losses_csv",
    "write_table_csv",
    "loss_plot_svg",
    "emit_artifacts",
    "best_final_loss",
    "median_final_loss",
]
