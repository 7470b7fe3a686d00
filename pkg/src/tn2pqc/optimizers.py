"""CMA-ES with ask/tell and central finite-difference gradients."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, EvaluationError

log = logging.getLogger(__name__)

EIGEN_FLOOR = 1e-14
STOP_WINDOW = 10


@dataclass(frozen=True)
class CmaesConfig:
    sigma0: float = 1e-2
    lam: int = 20
    max_iterations: int = 2000
    tolfun: float = 5e-4
    seed: int = 0

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise ConfigurationError("sigma0 must be positive")
        if self.lam < 4:
            raise ConfigurationError("population size must be at least 4")
        if not self.tolfun >= 0:
            raise ConfigurationError("tolfun must be non-negative")
        if self.max_iterations < 0:
            raise ConfigurationError("max_iterations must be non-negative")


@dataclass
class CmaesState:
    """Search distribution plus the strategy constants derived from dimension and lambda."""

    mean: np.ndarray
    sigma: float
    lam: int
    rng: np.random.Generator
    cov: np.ndarray = field(init=False)
    p_sigma: np.ndarray = field(init=False)
    p_c: np.ndarray = field(init=False)
    iteration: int = 0
    evaluations: int = 0
    best_params: Optional[np.ndarray] = None
    best_loss: float = np.inf

    def __post_init__(self):
        self.mean = np.array(self.mean, dtype=float).reshape(-1)
        n = self.mean.size
        if n < 1:
            raise ConfigurationError("dimension must be at least 1")
        self.cov = np.eye(n)
        self.p_sigma = np.zeros(n)
        self.p_c = np.zeros(n)
        self._eigvals = np.ones(n)
        self._eigvecs = np.eye(n)
        self._inv_sqrt = np.eye(n)
        self._eigen_iteration = 0

        lam = self.lam
        mu = lam // 2
        w = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
        self.weights = w / w.sum()
        self.mu = mu
        self.mueff = 1.0 / np.sum(self.weights**2)
        mueff = self.mueff
        self.cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
        self.cs = (mueff + 2) / (n + mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + mueff)
        self.cmu = min(1 - self.c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
        self.damps = 1 + 2 * max(0.0, np.sqrt((mueff - 1) / (n + 1)) - 1) + self.cs
        self.chi_n = np.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n**2))
        # the eigendecomposition is refreshed lazily, O(n^2) amortized per iteration
        self.eigen_gap = max(1, int(lam / (self.c1 + self.cmu) / n / 10))
        self._pending: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.mean.size

    def ask(self) -> np.ndarray:
        """Population of ``lam`` candidates, shape ``(lam, dim)``."""
        z = self.rng.standard_normal((self.lam, self.dim))
        y = (z * np.sqrt(self._eigvals)) @ self._eigvecs.T
        self._pending = self.mean + self.sigma * y
        return self._pending.copy()

    def tell(self, candidates: np.ndarray, losses: np.ndarray) -> None:
        x = np.asarray(candidates, dtype=float)
        f = np.asarray(losses, dtype=float)
        if x.shape != (self.lam, self.dim) or f.shape != (self.lam,):
            raise ConfigurationError("tell expects one loss per asked candidate")
        bad = np.flatnonzero(~np.isfinite(f))
        if bad.size:
            raise EvaluationError(f"objective returned {f[bad[0]]}", x[bad[0]].copy())
        self.evaluations += self.lam
        order = np.argsort(f, kind="stable")
        if f[order[0]] < self.best_loss:
            self.best_loss = float(f[order[0]])
            self.best_params = x[order[0]].copy()

        n = self.dim
        old = self.mean
        y_sel = (x[order[: self.mu]] - old) / self.sigma
        y_w = self.weights @ y_sel
        self.mean = old + self.sigma * y_w

        self.p_sigma = (1 - self.cs) * self.p_sigma + np.sqrt(self.cs * (2 - self.cs) * self.mueff) * (
            self._inv_sqrt @ y_w
        )
        ps_norm = np.linalg.norm(self.p_sigma)
        gens = self.iteration + 1
        h_sig = ps_norm / np.sqrt(1 - (1 - self.cs) ** (2 * gens)) / self.chi_n < 1.4 + 2 / (n + 1)
        self.p_c = (1 - self.cc) * self.p_c + h_sig * np.sqrt(self.cc * (2 - self.cc) * self.mueff) * y_w

        rank_mu = (y_sel.T * self.weights) @ y_sel
        c_fix = (1 - h_sig) * self.cc * (2 - self.cc)
        self.cov = (
            (1 - self.c1 - self.cmu + self.c1 * c_fix) * self.cov
            + self.c1 * np.outer(self.p_c, self.p_c)
            + self.cmu * rank_mu
        )
        self.sigma *= np.exp(min(1.0, (self.cs / self.damps) * (ps_norm / self.chi_n - 1)))
        self.iteration += 1
        if self.iteration - self._eigen_iteration >= self.eigen_gap:
            self.update_eigensystem()

    def update_eigensystem(self) -> None:
        """Symmetrize the covariance, refresh its eigenbasis and repair tiny eigenvalues."""
        c = 0.5 * (self.cov + self.cov.T)
        vals, vecs = np.linalg.eigh(c)
        floor = EIGEN_FLOOR * max(1.0, vals[-1])
        if vals[0] < floor:
            log.info("covariance eigenvalue %.3e repaired to %.1e", vals[0], floor)
            vals = np.maximum(vals, floor)
            c = (vecs * vals) @ vecs.T
        self.cov = c
        self._eigvals, self._eigvecs = vals, vecs
        self._inv_sqrt = (vecs / np.sqrt(vals)) @ vecs.T
        self._eigen_iteration = self.iteration


Objective = Callable[[np.ndarray], float]


def cmaes_minimize(
    objective: Callable,
    theta0: np.ndarray,
    config: CmaesConfig,
    vectorized: bool = False,
    callback: Optional[Callable[[CmaesState], None]] = None,
) -> Tuple[np.ndarray, List[float], CmaesState]:
    """Minimize ``objective`` starting from the mean ``theta0``.

    With ``vectorized=True`` the objective maps a ``(lam, dim)`` population to
    ``lam`` losses in one call. ``loss_history`` holds the population-best loss
    of every iteration. Stops after ``max_iterations`` or once the population-best
    losses of the last 10 iterations, together with the current population, span
    less than ``tolfun``.
    """
    theta0 = np.asarray(theta0, dtype=float).reshape(-1)
    state = CmaesState(theta0, config.sigma0, config.lam, np.random.default_rng(config.seed))
    history: List[float] = []
    for _ in range(config.max_iterations):
        pop = state.ask()
        if vectorized:
            losses = np.asarray(objective(pop), dtype=float).reshape(-1)
        else:
            losses = np.array([float(objective(p)) for p in pop])
        state.tell(pop, losses)
        history.append(float(np.min(losses)))
        if callback is not None:
            callback(state)
        recent = history[-STOP_WINDOW:]
        spread = max(max(recent), float(np.max(losses))) - min(recent)
        if len(history) >= STOP_WINDOW and spread < config.tolfun:
            log.debug("tolfun stop after %d iterations", state.iteration)
            break
    best = state.best_params if state.best_params is not None else theta0.copy()
    return best, history, state


def finite_diff_gradient(objective: Objective, theta: np.ndarray, index: int, epsilon: float = 1e-8) -> float:
    """Central difference of ``objective`` along coordinate ``index``."""
    if not epsilon > 0:
        raise ConfigurationError("epsilon must be positive")
    theta = np.asarray(theta, dtype=float)
    step = np.zeros_like(theta)
    step.flat[index] = epsilon
    return (float(objective(theta + step)) - float(objective(theta - step))) / (2 * epsilon)
