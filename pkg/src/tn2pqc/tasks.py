"""Training tasks: bitstring datasets with the KL loss, and the 2D Heisenberg
model as a Pauli-string Hamiltonian with its energy functional."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np
import scipy.sparse

from .errors import ConfigurationError, ShapeError
from .mps import MAX_DENSE_QUBITS, bits_to_index

PROB_FLOOR = 1e-300


@dataclass(frozen=True, eq=False)
class Dataset:
    """Deduplicated set of N-bit strings carrying uniform weight ``1/|D|``.

    ``bits`` is an ``(M, N)`` integer array sorted by dense statevector index.
    """

    num_bits: int
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.int64).reshape(-1, self.num_bits)
        if bits.shape[0] == 0:
            raise ConfigurationError("dataset is empty")
        if np.any((bits != 0) & (bits != 1)):
            raise ShapeError("dataset strings may only contain 0 and 1")
        idx = bits_to_index(bits)
        _, first = np.unique(idx, return_index=True)
        object.__setattr__(self, "bits", bits[first])

    def __len__(self) -> int:
        return self.bits.shape[0]

    @property
    def weight(self) -> float:
        return 1.0 / len(self)

    @cached_property
    def indices(self) -> np.ndarray:
        """Dense statevector index of every string."""
        return bits_to_index(self.bits)

    @property
    def strings(self) -> List[str]:
        return ["".join(map(str, row)) for row in self.bits]

    @classmethod
    def from_strings(cls, strings: Sequence[str]) -> "Dataset":
        strings = list(strings)
        if not strings:
            raise ConfigurationError("dataset is empty")
        n = len(strings[0])
        if any(len(s) != n for s in strings):
            raise ShapeError("all dataset strings must have the same length")
        return cls(n, np.array([[int(c) for c in s] for s in strings], dtype=np.int64))

    def to_text(self) -> str:
        return "\n".join(self.strings) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "Dataset":
        return cls.from_strings([ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()])

    def target_distribution(self) -> np.ndarray:
        p = np.zeros(2**self.num_bits)
        p[self.indices] = self.weight
        return p


def cardinality_dataset(n: int, c: int) -> Dataset:
    """All n-bit strings with exactly ``c`` ones."""
    if not 0 <= c <= n:
        raise ConfigurationError(f"cardinality {c} outside [0, {n}]")
    rows = []
    for ones in itertools.combinations(range(n), c):
        row = np.zeros(n, dtype=np.int64)
        row[list(ones)] = 1
        rows.append(row)
    return Dataset(n, np.array(rows).reshape(-1, n))


def bas_dataset(rows: int, cols: int) -> Dataset:
    """Bars-and-stripes images flattened row-major.

    Stripes have every row constant, bars have every column constant; the
    all-0 and all-1 images appear once.
    """
    if rows < 1 or cols < 1:
        raise ConfigurationError("image dimensions must be positive")
    if rows * cols > MAX_DENSE_QUBITS:
        raise ConfigurationError(f"{rows}x{cols} images exceed {MAX_DENSE_QUBITS} bits")
    images = []
    for pattern in itertools.product((0, 1), repeat=rows):
        images.append(np.repeat(np.array(pattern)[:, None], cols, axis=1).reshape(-1))
    for pattern in itertools.product((0, 1), repeat=cols):
        images.append(np.repeat(np.array(pattern)[None, :], rows, axis=0).reshape(-1))
    return Dataset(rows * cols, np.array(images))


ProbabilitySource = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


def dataset_probabilities(q: ProbabilitySource, dataset: Dataset) -> np.ndarray:
    """Model probabilities of the dataset strings.

    ``q`` is either a dense probability vector of length ``2**N`` or a callable
    mapping an ``(M, N)`` bit array to probabilities.
    """
    if callable(q):
        return np.asarray(q(dataset.bits), dtype=float)
    q = np.asarray(q)
    if q.shape[-1] != 2**dataset.num_bits:
        raise ShapeError(f"probability vector of length {q.shape[-1]} for {dataset.num_bits} bits")
    return q[..., dataset.indices]


def kl_divergence(q: ProbabilitySource, dataset: Dataset) -> float:
    """KL divergence (nats) from the uniform empirical distribution to ``q``."""
    probs = dataset_probabilities(q, dataset)
    return float(-np.log(len(dataset)) - np.mean(np.log(np.maximum(probs, PROB_FLOOR))))


def kl_divergence_batch(q: np.ndarray, dataset: Dataset) -> np.ndarray:
    """KL divergence for a batch of dense probability vectors, shape ``(P, 2**N)``."""
    probs = np.asarray(q)[:, dataset.indices]
    return -np.log(len(dataset)) - np.mean(np.log(np.maximum(probs, PROB_FLOOR)), axis=1)


# ----------------------------------------------------------------- Hamiltonians


def snake_index(row: int, col: int, cols: int) -> int:
    """Chain position of grid site ``(row, col)``: rows left-to-right, then right-to-left."""
    return row * cols + (col if row % 2 == 0 else cols - 1 - col)


def grid_edges(rows: int, cols: int) -> List[Tuple[int, int]]:
    """Nearest-neighbor pairs of an open ``rows x cols`` grid in snake ordering."""
    if rows < 1 or cols < 1:
        raise ConfigurationError("grid dimensions must be positive")
    edges = []
    for r in range(rows):
        for c in range(cols):
            here = snake_index(r, c, cols)
            if c + 1 < cols:
                edges.append(tuple(sorted((here, snake_index(r, c + 1, cols)))))
            if r + 1 < rows:
                edges.append(tuple(sorted((here, snake_index(r + 1, c, cols)))))
    return sorted(edges)


PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True, eq=False)
class PauliHamiltonian:
    num_qubits: int
    terms: Tuple[Tuple[float, str], ...]

    def __post_init__(self):
        terms = tuple((float(c), str(p)) for c, p in self.terms)
        for c, p in terms:
            if len(p) != self.num_qubits or set(p) - set("IXYZ"):
                raise ShapeError(f"bad Pauli string {p!r} for {self.num_qubits} qubits")
            if not np.isfinite(c):
                raise ConfigurationError("Hamiltonian coefficients must be finite")
        object.__setattr__(self, "terms", terms)

    def to_sparse(self) -> scipy.sparse.csr_matrix:
        if self.num_qubits > MAX_DENSE_QUBITS:
            raise ShapeError("Hamiltonian too large for a matrix representation")
        dim = 2**self.num_qubits
        total = scipy.sparse.csr_matrix((dim, dim), dtype=complex)
        for coeff, string in self.terms:
            op = scipy.sparse.identity(1, dtype=complex, format="csr")
            for label in string:
                op = scipy.sparse.kron(op, PAULI[label], format="csr")
            total = total + coeff * op
        return total.tocsr()

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def to_json(self) -> str:
        return json.dumps(
            {"num_qubits": self.num_qubits, "terms": [{"coeff": c, "pauli": p} for c, p in self.terms]},
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "PauliHamiltonian":
        doc = json.loads(text)
        return cls(doc["num_qubits"], tuple((t["coeff"], t["pauli"]) for t in doc["terms"]))


def heisenberg_terms(rows: int, cols: int) -> PauliHamiltonian:
    """``(1/4) sum_<ij> (XX + YY + ZZ)`` over grid edges, snake-ordered, open boundaries."""
    n = rows * cols
    if n > MAX_DENSE_QUBITS:
        raise ConfigurationError(f"{rows}x{cols} grid exceeds {MAX_DENSE_QUBITS} qubits")
    terms = []
    for i, j in grid_edges(rows, cols):
        for mu in "XYZ":
            label = ["I"] * n
            label[i] = label[j] = mu
            terms.append((0.25, "".join(label)))
    return PauliHamiltonian(n, tuple(terms))


def apply_pauli_string(psi: np.ndarray, string: str) -> np.ndarray:
    """``P|psi>`` for a Pauli string by per-axis application."""
    n = len(string)
    out = np.asarray(psi).reshape((2,) * n)
    for q, label in enumerate(string):
        if label == "I":
            continue
        out = np.moveaxis(np.tensordot(PAULI[label], out, axes=(1, q)), 0, q)
    return out.reshape(-1)


def energy(psi: np.ndarray, h: PauliHamiltonian) -> float:
    """``<psi|H|psi>`` summed term by term."""
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    if psi.size != 2**h.num_qubits:
        raise ShapeError(f"state of length {psi.size} for {h.num_qubits} qubits")
    vals = np.array([c * np.vdot(psi, apply_pauli_string(psi, p)) for c, p in h.terms])
    total = np.sum(vals)
    if abs(total.imag) > 1e-10:
        raise ArithmeticError(f"energy has imaginary part {total.imag:.3e}")
    return float(total.real)


def energy_batch(psis: np.ndarray, h_matrix) -> np.ndarray:
    """Energies of a batch of states ``(P, 2**N)`` against a (sparse) matrix."""
    hpsi = (h_matrix @ psis.T).T
    return np.real(np.sum(psis.conj() * hpsi, axis=1))


def energy_error(e: float, e0: float) -> float:
    return e - e0
