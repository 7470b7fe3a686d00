"""MPS Born machine trained with two-site gradient sweeps on the KL loss."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, ShapeError
from .linalg import DTYPE, svd_truncated
from .mps import DEFAULT_SV_THRESHOLD, MPS
from .tasks import PROB_FLOOR, Dataset

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TnbmConfig:
    eta: float = 0.01
    sweeps: int = 50
    chi_max: int = 8
    sv_threshold: float = DEFAULT_SV_THRESHOLD
    seed: int = 0
    init_bond: int = 2

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigurationError("learning rate must be positive")
        if self.sweeps < 1:
            raise ConfigurationError("at least one sweep is required")
        if self.chi_max < 1:
            raise ConfigurationError("chi_max must be at least 1")


def init_tnbm(n: int, rng: np.random.Generator, bond: int = 2) -> MPS:
    """Near-uniform start: entries drawn from U[0.9, 1.1], then normalized."""
    dims = [1] + [min(bond, 2**k, 2 ** (n - k)) for k in range(1, n)] + [1]
    cores = tuple(rng.uniform(0.9, 1.1, (dims[i], 2, dims[i + 1])).astype(DTYPE) for i in range(n))
    return MPS(cores).canonicalize(0)


def tnbm_kl(mps: MPS, dataset: Dataset) -> float:
    """KL divergence of the (normalized) MPS distribution from the dataset."""
    probs = np.abs(mps.amplitudes(dataset.bits)) ** 2
    return float(-np.log(len(dataset)) - np.mean(np.log(np.maximum(probs, PROB_FLOOR))))


def _left_envs(mps: MPS, bits: np.ndarray, upto: int) -> List[np.ndarray]:
    envs = [np.ones((bits.shape[0], 1), dtype=DTYPE)]
    for k in range(upto):
        envs.append(_absorb_left(envs[-1], mps.cores[k], bits[:, k]))
    return envs


def _absorb_left(env, core, col):
    return np.einsum("ml,mlr->mr", env, core.transpose(1, 0, 2)[col])


def _absorb_right(env, core, col):
    return np.einsum("mlr,mr->ml", core.transpose(1, 0, 2)[col], env)


def _merged_gradient(theta, left, right, bits_i, bits_j, n_data):
    """Returns (grad, psi) for the merged tensor ``theta (l, 2, 2, r)``."""
    z = np.vdot(theta, theta).real
    sel = theta[:, bits_i, bits_j, :].transpose(1, 0, 2)  # (M, l, r)
    psi = np.einsum("ml,mlr,mr->m", left, sel, right)
    safe = np.where(np.abs(psi) ** 2 > PROB_FLOOR, psi, np.sqrt(PROB_FLOOR))
    # d psi(x) / d theta[a, s, t, b] = left[x, a] right[x, b] delta(s, x_i) delta(t, x_j)
    weights = (left / safe[:, None])[:, :, None] * right[:, None, :]  # (M, l, r)
    acc = np.zeros(theta.shape, dtype=DTYPE)
    np.add.at(acc.transpose(1, 2, 0, 3), (bits_i, bits_j), weights)
    grad = 2.0 * theta / z - (2.0 / n_data) * acc.conj()
    return grad, psi


def two_site_gradient(mps: MPS, dataset: Dataset, site: int) -> np.ndarray:
    """KL gradient with respect to the merged tensor of sites ``(site, site + 1)``.

    Uses the conjugate-gradient convention: ``theta - eta * grad`` is a descent step.
    The MPS gauge center must sit on one of the two sites.
    """
    n = mps.num_sites
    if dataset.num_bits != n:
        raise ShapeError(f"{dataset.num_bits}-bit data for a {n}-site MPS")
    if not 0 <= site < n - 1:
        raise ShapeError(f"no bond at site {site}")
    if mps.gauge_center not in (site, site + 1):
        mps = mps.canonicalize(site)
    bits = dataset.bits
    left = _left_envs(mps, bits, site)[-1]
    right = np.ones((bits.shape[0], 1), dtype=DTYPE)
    for k in range(n - 1, site + 1, -1):
        right = _absorb_right(right, mps.cores[k], bits[:, k])
    theta = np.tensordot(mps.cores[site], mps.cores[site + 1], axes=(2, 0))
    grad, _ = _merged_gradient(theta, left, right, bits[:, site], bits[:, site + 1], len(dataset))
    return grad


def merged_kl(theta, mps: MPS, dataset: Dataset, site: int) -> float:
    """KL loss as a function of the merged tensor, including its partition function
    (other cores are assumed to be in canonical gauge around the pair)."""
    n = mps.num_sites
    bits = dataset.bits
    left = _left_envs(mps, bits, site)[-1]
    right = np.ones((bits.shape[0], 1), dtype=DTYPE)
    for k in range(n - 1, site + 1, -1):
        right = _absorb_right(right, mps.cores[k], bits[:, k])
    sel = theta[:, bits[:, site], bits[:, site + 1], :].transpose(1, 0, 2)
    psi = np.einsum("ml,mlr,mr->m", left, sel, right)
    z = np.vdot(theta, theta).real
    q = np.abs(psi) ** 2 / z
    return float(-np.log(len(dataset)) - np.mean(np.log(np.maximum(q, PROB_FLOOR))))


def train_tnbm(
    dataset: Dataset, config: TnbmConfig, init: Optional[MPS] = None
) -> Tuple[MPS, List[float]]:
    """Gradient-descent sweeps over merged two-site tensors.

    One sweep is a left-to-right pass followed by a right-to-left pass. The loss is
    recorded once before training and after every sweep.
    """
    n = dataset.num_bits
    if len(dataset) == 0:
        raise ConfigurationError("dataset is empty")
    if n < 2:
        raise ConfigurationError("training needs at least two bits")
    rng = np.random.default_rng(config.seed)
    mps = init if init is not None else init_tnbm(n, rng, min(config.init_bond, config.chi_max))
    mps = mps.canonicalize(0)
    cores = list(mps.cores)
    bits = dataset.bits
    m = len(dataset)
    eta, chi, thr = config.eta, config.chi_max, config.sv_threshold

    left = [None] * (n + 1)
    right = [None] * (n + 1)
    left[0] = np.ones((m, 1), dtype=DTYPE)
    right[n] = np.ones((m, 1), dtype=DTYPE)
    for k in range(n - 1, 0, -1):
        right[k] = _absorb_right(right[k + 1], cores[k], bits[:, k])

    history = [tnbm_kl(mps, dataset)]
    for sweep in range(config.sweeps):
        for i in range(n - 1):
            theta = np.tensordot(cores[i], cores[i + 1], axes=(2, 0))
            grad, _ = _merged_gradient(theta, left[i], right[i + 2], bits[:, i], bits[:, i + 1], m)
            theta = theta - eta * grad
            l, r = theta.shape[0], theta.shape[3]
            res = svd_truncated(theta.reshape(2 * l, 2 * r), chi, thr)
            s = res.singular_values / np.linalg.norm(res.singular_values)
            cores[i] = res.left.reshape(l, 2, res.rank)
            cores[i + 1] = (s[:, None] * res.right).reshape(res.rank, 2, r)
            left[i + 1] = _absorb_left(left[i], cores[i], bits[:, i])
        for i in range(n - 2, -1, -1):
            theta = np.tensordot(cores[i], cores[i + 1], axes=(2, 0))
            grad, _ = _merged_gradient(theta, left[i], right[i + 2], bits[:, i], bits[:, i + 1], m)
            theta = theta - eta * grad
            l, r = theta.shape[0], theta.shape[3]
            res = svd_truncated(theta.reshape(2 * l, 2 * r), chi, thr)
            s = res.singular_values / np.linalg.norm(res.singular_values)
            cores[i + 1] = res.right.reshape(res.rank, 2, r)
            cores[i] = (res.left * s).reshape(l, 2, res.rank)
            right[i + 1] = _absorb_right(right[i + 2], cores[i + 1], bits[:, i + 1])
        mps = MPS(tuple(cores), 0, chi)
        history.append(tnbm_kl(mps, dataset))
        log.debug("tnbm sweep %d KL %.8f bonds %s", sweep, history[-1], mps.bond_dims)
    return mps, history
