"""Matrix product operators for Pauli Hamiltonians and two-site DMRG."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, ShapeError
from .linalg import DENSE_EIGH_LIMIT, DTYPE, eigh_smallest, lanczos_smallest, svd_truncated
from .mps import MAX_DENSE_QUBITS, MPS, random_mps
from .tasks import PAULI, PauliHamiltonian, heisenberg_terms

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MPO:
    """Cores with axes ``(left, out, in, right)``."""

    cores: Tuple[np.ndarray, ...]

    def __post_init__(self):
        cores = tuple(np.asarray(c, dtype=DTYPE) for c in self.cores)
        for i, c in enumerate(cores):
            if c.ndim != 4 or c.shape[1:3] != (2, 2):
                raise ShapeError(f"MPO core {i} has shape {c.shape}")
        if cores[0].shape[0] != 1 or cores[-1].shape[3] != 1:
            raise ShapeError("MPO boundary bonds must be 1")
        object.__setattr__(self, "cores", cores)

    @property
    def num_sites(self) -> int:
        return len(self.cores)

    @property
    def bond_dims(self) -> List[int]:
        return [1] + [c.shape[3] for c in self.cores]

    def to_dense(self) -> np.ndarray:
        n = self.num_sites
        if n > 14:
            raise ShapeError(f"dense form of a {n}-site MPO is too large")
        op = self.cores[0]
        for c in self.cores[1:]:
            # op: (1, O, I, w) x c: (w, o, i, v) -> (1, O o, I i, v)
            op = np.einsum("aOIw,woiv->aOoIiv", op, c)
            s = op.shape
            op = op.reshape(s[0], s[1] * s[2], s[3] * s[4], s[5])
        return op[0, :, :, 0]


def mpo_from_pauli(h: PauliHamiltonian) -> MPO:
    """Finite-automaton MPO: channel 0 is "nothing placed yet", the last channel is
    "term complete", and each multi-site term owns one channel across its support."""
    n = h.num_qubits
    spans = []
    single = []
    for coeff, string in h.terms:
        support = [q for q, p in enumerate(string) if p != "I"]
        if not support:
            single.append((coeff, 0, string))
        elif len(support) == 1:
            single.append((coeff, support[0], string))
        else:
            spans.append((coeff, support[0], support[-1], string))
    # channels crossing bond b (between site b and b+1)
    crossing = [[t for t, (_, a, z, _) in enumerate(spans) if a <= b < z] for b in range(n - 1)]
    dims = [1] + [2 + len(c) for c in crossing] + [1]
    cores = []
    for s in range(n):
        dl, dr = dims[s], dims[s + 1]
        w = np.zeros((dl, 2, 2, dr), dtype=DTYPE)
        lmap = {t: k + 1 for k, t in enumerate(crossing[s - 1])} if s > 0 else {}
        rmap = {t: k + 1 for k, t in enumerate(crossing[s])} if s < n - 1 else {}
        l_start = 0
        l_done = dl - 1 if s > 0 else None
        r_start = 0 if s < n - 1 else None
        r_done = dr - 1 if s < n - 1 else 0
        # identity propagation of the start and done channels
        if r_start is not None:
            w[l_start, :, :, r_start] += PAULI["I"]
        if l_done is not None:
            w[l_done, :, :, r_done] += PAULI["I"]
        for coeff, q, string in single:
            if q == s:
                w[l_start, :, :, r_done] += coeff * PAULI[string[q]]
        for t, (coeff, a, z, string) in enumerate(spans):
            op = PAULI[string[s]]
            if s == a:
                w[l_start, :, :, rmap[t]] += coeff * op
            elif a < s < z:
                w[lmap[t], :, :, rmap[t]] += op
            elif s == z:
                w[lmap[t], :, :, r_done] += op
        cores.append(w)
    return MPO(tuple(cores))


def heisenberg_mpo(rows: int, cols: int) -> MPO:
    if rows < 1 or cols < 1:
        raise ConfigurationError("grid dimensions must be positive")
    if rows * cols > MAX_DENSE_QUBITS:
        raise ConfigurationError(f"{rows}x{cols} grid exceeds {MAX_DENSE_QUBITS} sites")
    return mpo_from_pauli(heisenberg_terms(rows, cols))


# ----------------------------------------------------------------- environments


def _left_step(env, bra, w, ket):
    # env[a, w, b]: bra bond a, operator bond w, ket bond b
    return np.einsum("awb,asc,wstv,btd->cvd", env, bra.conj(), w, ket, optimize=True)


def _right_step(env, bra, w, ket):
    return np.einsum("cvd,asc,wstv,btd->awb", env, bra.conj(), w, ket, optimize=True)


def energy_of_mps(mps: MPS, mpo: MPO) -> float:
    """``<psi|H|psi>`` for a normalized MPS."""
    if mps.num_sites != mpo.num_sites:
        raise ShapeError(f"{mps.num_sites}-site state against {mpo.num_sites}-site operator")
    env = np.ones((1, 1, 1), dtype=DTYPE)
    for a, w in zip(mps.cores, mpo.cores):
        env = _left_step(env, a, w, a)
    val = complex(env[0, 0, 0])
    if abs(val.imag) > 1e-10:
        raise ArithmeticError(f"energy has imaginary part {val.imag:.3e}")
    return val.real


@dataclass
class DmrgResult:
    mps: MPS
    energy: float
    energy_history: List[float]


def _local_ground(left, w1, w2, right, theta0):
    l, r = left.shape[2], right.shape[2]
    dim = l * 4 * r
    if dim <= DENSE_EIGH_LIMIT:
        h = np.einsum("xwl,wpav,vqbu,yur->xpqylabr", left, w1, w2, right, optimize=True)
        h = h.reshape(dim, dim)
        h = 0.5 * (h + h.conj().T)
        vals, vecs = eigh_smallest(h, 1)
        return float(vals[0]), vecs[:, 0]

    def matvec(v):
        t = v.reshape(l, 2, 2, r)
        out = np.einsum("xwl,wpav,vqbu,yur,labr->xpqy", left, w1, w2, right, t, optimize=True)
        return out.reshape(-1)

    return lanczos_smallest(matvec, dim, theta0.reshape(-1))


def dmrg_ground_state(
    mpo: MPO,
    chi_max: int,
    sweeps: int = 10,
    rng: Optional[np.random.Generator] = None,
    sv_threshold: float = 0.0,
    tol: float = 1e-12,
) -> DmrgResult:
    """Two-site DMRG. Each sweep is a left-to-right plus a right-to-left pass.

    Stops early once a full sweep lowers the energy by less than ``tol``.
    ``energy_history`` holds the energy after every half-sweep.
    """
    if sweeps < 1:
        raise ConfigurationError("sweeps must be at least 1")
    if chi_max < 1:
        raise ConfigurationError("chi_max must be at least 1")
    rng = np.random.default_rng(0) if rng is None else rng
    n = mpo.num_sites
    ws = mpo.cores
    psi = random_mps(n, min(chi_max, 4), rng, real=True).canonicalize(0)
    cores = list(psi.cores)

    lenv = [None] * (n + 1)
    renv = [None] * (n + 1)
    lenv[0] = np.ones((1, 1, 1), dtype=DTYPE)
    renv[n] = np.ones((1, 1, 1), dtype=DTYPE)
    for i in range(n - 1, 0, -1):
        renv[i] = _right_step(renv[i + 1], cores[i], ws[i], cores[i])

    history: List[float] = []
    if n == 1:
        h = ws[0][0, :, :, 0]
        vals, vecs = eigh_smallest(0.5 * (h + h.conj().T), 1)
        state = MPS((vecs[:, 0].reshape(1, 2, 1),), 0, chi_max)
        return DmrgResult(state, float(vals[0]), [float(vals[0])])

    for sweep in range(sweeps):
        for i in range(n - 1):
            theta = np.tensordot(cores[i], cores[i + 1], axes=(2, 0))
            e, vec = _local_ground(lenv[i], ws[i], ws[i + 1], renv[i + 2], theta)
            l, r = cores[i].shape[0], cores[i + 1].shape[2]
            res = svd_truncated(vec.reshape(l * 2, 2 * r), chi_max, sv_threshold)
            s = res.singular_values / np.linalg.norm(res.singular_values)
            cores[i] = res.left.reshape(l, 2, res.rank)
            cores[i + 1] = (s[:, None] * res.right).reshape(res.rank, 2, r)
            lenv[i + 1] = _left_step(lenv[i], cores[i], ws[i], cores[i])
        history.append(energy_of_mps(MPS(tuple(cores), n - 1), mpo))
        for i in range(n - 2, -1, -1):
            theta = np.tensordot(cores[i], cores[i + 1], axes=(2, 0))
            e, vec = _local_ground(lenv[i], ws[i], ws[i + 1], renv[i + 2], theta)
            l, r = cores[i].shape[0], cores[i + 1].shape[2]
            res = svd_truncated(vec.reshape(l * 2, 2 * r), chi_max, sv_threshold)
            s = res.singular_values / np.linalg.norm(res.singular_values)
            cores[i + 1] = res.right.reshape(res.rank, 2, r)
            cores[i] = (res.left * s).reshape(l, 2, res.rank)
            renv[i + 1] = _right_step(renv[i + 2], cores[i + 1], ws[i + 1], cores[i + 1])
        history.append(energy_of_mps(MPS(tuple(cores), 0), mpo))
        log.debug("dmrg sweep %d energy %.14f", sweep, history[-1])
        if len(history) >= 4 and history[-3] - history[-1] < tol:
            break

    state = MPS(tuple(cores), 0, chi_max)
    return DmrgResult(state, energy_of_mps(state, mpo), history)


def exact_ground_energy(h: PauliHamiltonian, k: int = 1) -> np.ndarray:
    """Lowest eigenvalues of a Pauli Hamiltonian by exact diagonalization."""
    mat = h.to_sparse()
    if mat.shape[0] <= DENSE_EIGH_LIMIT:
        mat = mat.toarray()
    vals, _ = eigh_smallest(mat, k)
    return vals
