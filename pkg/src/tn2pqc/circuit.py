"""Layered SU(4) circuits, KAK (de)composition and exact statevector simulation.

Two-qubit gate matrices act on ``|x_i x_j>`` with the first qubit of the pair as
the more significant bit. Statevectors index qubit 0 as the most significant bit.

The 15 angles of a gate are laid out as::

    theta[0:3]   U3 on qubit i   (left factor)
    theta[3:6]   U3 on qubit j   (left factor)
    theta[6]     XX entangler  exp(-i theta/2 X(x)X)
    theta[7]     YY entangler
    theta[8]     ZZ entangler
    theta[9:12]  U3 on qubit i   (right factor)
    theta[12:15] U3 on qubit j   (right factor)

and the gate matrix is ``(A_i (x) A_j) XX YY ZZ (B_i (x) B_j) * exp(-i phase)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, ShapeError, SizeGuardError, UnitarityError
from .linalg import DTYPE, is_unitary

MAX_QUBITS = 20
PARAMS_PER_GATE = 15
YY_INDEX = 7  # 0-based position of the YY entangling angle within a gate

LINEAR = "linear"
ALL_TO_ALL = "all-to-all"

_X = np.array([[0, 1], [1, 0]], dtype=DTYPE)
_Y = np.array([[0, -1j], [1j, 0]], dtype=DTYPE)
_Z = np.array([[1, 0], [0, -1]], dtype=DTYPE)
XX = np.kron(_X, _X)
YY = np.kron(_Y, _Y)
ZZ = np.kron(_Z, _Z)

# magic basis; real orthogonal matrices map to local SU(2) x SU(2) under conjugation
MAGIC = np.array(
    [[1, 0, 0, 1j], [0, 1j, 1, 0], [0, 1j, -1, 0], [1, 0, 0, -1j]], dtype=DTYPE
) / np.sqrt(2)
MAGIC_DAG = MAGIC.conj().T
# eigenvalues of XX, YY, ZZ on the magic basis vectors
_MAGIC_SIGNS = np.real(
    np.stack([np.diag(MAGIC_DAG @ P @ MAGIC) for P in (XX, YY, ZZ)], axis=1)
)


def u3_matrix(theta, phi, lam) -> np.ndarray:
    """Single-qubit rotation
    ``[[cos(t/2), -e^{i lam} sin(t/2)], [e^{i phi} sin(t/2), e^{i(phi+lam)} cos(t/2)]]``.

    Broadcasts over array arguments; the result has shape ``(..., 2, 2)``.
    """
    theta, phi, lam = np.broadcast_arrays(
        np.asarray(theta, dtype=float), np.asarray(phi, dtype=float), np.asarray(lam, dtype=float)
    )
    c = np.cos(theta / 2)
    s = np.sin(theta / 2)
    out = np.empty(theta.shape + (2, 2), dtype=DTYPE)
    out[..., 0, 0] = c
    out[..., 0, 1] = -np.exp(1j * lam) * s
    out[..., 1, 0] = np.exp(1j * phi) * s
    out[..., 1, 1] = np.exp(1j * (phi + lam)) * c
    return out


def _kron2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...kl->...ikjl", a, b).reshape(a.shape[:-2] + (4, 4))


def entangler_diagonal(tx, ty, tz) -> np.ndarray:
    """Magic-basis eigenvalues of ``XX(tx) YY(ty) ZZ(tz)``, shape ``(..., 4)``."""
    angles = np.stack(np.broadcast_arrays(tx, ty, tz), axis=-1)
    return np.exp(-0.5j * angles @ _MAGIC_SIGNS.T)


def entangler_matrix(tx, ty, tz) -> np.ndarray:
    """``XX(tx) YY(ty) ZZ(tz)`` in the computational basis, shape ``(..., 4, 4)``.

    The product splits into 2x2 blocks on ``{|00>, |11>}`` and ``{|01>, |10>}``,
    where it acts as a global phase times an X rotation.
    """
    tx, ty, tz = np.broadcast_arrays(
        np.asarray(tx, dtype=float), np.asarray(ty, dtype=float), np.asarray(tz, dtype=float)
    )
    a, b = (tx - ty) / 2, (tx + ty) / 2
    even, odd = np.exp(-0.5j * tz), np.exp(0.5j * tz)
    out = np.zeros(tx.shape + (4, 4), dtype=DTYPE)
    out[..., 0, 0] = out[..., 3, 3] = even * np.cos(a)
    out[..., 0, 3] = out[..., 3, 0] = -1j * even * np.sin(a)
    out[..., 1, 1] = out[..., 2, 2] = odd * np.cos(b)
    out[..., 1, 2] = out[..., 2, 1] = -1j * odd * np.sin(b)
    return out


def su4_matrix(theta) -> np.ndarray:
    """Gate matrix for 15 angles (broadcasts over leading axes of ``theta``)."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != PARAMS_PER_GATE:
        raise ShapeError(f"expected {PARAMS_PER_GATE} angles, got {theta.shape[-1]}")
    a = _kron2(u3_matrix(*np.moveaxis(theta[..., 0:3], -1, 0)), u3_matrix(*np.moveaxis(theta[..., 3:6], -1, 0)))
    b = _kron2(u3_matrix(*np.moveaxis(theta[..., 9:12], -1, 0)), u3_matrix(*np.moveaxis(theta[..., 12:15], -1, 0)))
    return a @ entangler_matrix(theta[..., 6], theta[..., 7], theta[..., 8]) @ b


def gate_matrix(theta, phase) -> np.ndarray:
    """``su4_matrix(theta) * exp(-i phase)``."""
    return su4_matrix(theta) * np.exp(-1j * np.asarray(phase))[..., None, None]


# -------------------------------------------------------------------- KAK


def _u3_angles(w: np.ndarray) -> Tuple[float, float, float, float]:
    """Angles and phase with ``w == exp(i gamma) * u3_matrix(theta, phi, lam)``."""
    c, s = abs(w[0, 0]), abs(w[1, 0])
    theta = 2 * np.arctan2(s, c)
    gamma = np.angle(w[0, 0])
    phi = np.angle(w[1, 0]) - gamma
    # pick the better-conditioned entry to fix phi + lam
    if c >= s:
        lam = np.angle(w[1, 1]) - np.angle(w[1, 0])
    else:
        lam = np.angle(-w[0, 1]) - gamma
    return float(theta), float(phi), float(lam), float(gamma)


def _kron_factor(k: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Split ``k = a (x) b`` with ``det(a) = 1``, via the rank-1 rearrangement."""
    r = k.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    u, s, vh = np.linalg.svd(r)
    a = (u[:, 0] * np.sqrt(s[0])).reshape(2, 2)
    b = (vh[0] * np.sqrt(s[0])).reshape(2, 2)
    da = np.sqrt(np.linalg.det(a))
    return a / da, b * da


def _diagonalize_symmetric_unitary(m: np.ndarray) -> np.ndarray:
    """Real orthogonal ``P`` with ``P.T @ m @ P`` diagonal, for complex symmetric
    unitary ``m`` (whose real and imaginary parts commute)."""
    re, im = m.real, m.imag
    rng = np.random.default_rng(1234)
    for _ in range(20):
        a, b = rng.uniform(-1, 1, size=2)
        _, p = np.linalg.eigh(a * re + b * im)
        d = p.T @ m @ p
        if np.allclose(d - np.diag(np.diagonal(d)), 0, atol=1e-11):
            return p
    raise ArithmeticError("failed to diagonalize magic-basis matrix")


def kak_decompose(u: np.ndarray) -> Tuple[np.ndarray, float]:
    """Angles and global phase with ``gate_matrix(theta, phase) == u``."""
    u = np.asarray(u, dtype=DTYPE)
    if u.shape != (4, 4) or not is_unitary(u, 1e-10):
        raise UnitarityError("kak_decompose needs a 4x4 unitary")
    v = u / np.linalg.det(u) ** 0.25
    vb = MAGIC_DAG @ v @ MAGIC
    m2 = vb.T @ vb
    p = _diagonalize_symmetric_unitary(m2)
    if np.linalg.det(p) < 0:
        p[:, 0] *= -1
    d = np.sqrt(np.diagonal(p.T @ m2 @ p))
    o1 = vb @ p / d
    if np.linalg.det(o1.real) < 0:
        d[0] *= -1
        o1[:, 0] *= -1
    o1 = o1.real
    k1 = MAGIC @ o1 @ MAGIC_DAG
    k2 = MAGIC @ p.T @ MAGIC_DAG
    # solve angle(d_k) = g - (tx s_x + ty s_y + tz s_z)/2 exactly (any branch works)
    lhs = np.column_stack([np.ones(4), -0.5 * _MAGIC_SIGNS])
    g, tx, ty, tz = np.linalg.solve(lhs, np.angle(d))
    a1, a2 = _kron_factor(k1)
    b1, b2 = _kron_factor(k2)
    theta = np.empty(PARAMS_PER_GATE)
    for sl, w in ((slice(0, 3), a1), (slice(3, 6), a2), (slice(9, 12), b1), (slice(12, 15), b2)):
        theta[sl] = _u3_angles(w)[:3]
    theta[6:9] = tx, ty, tz
    ref = su4_matrix(theta)
    overlap = np.trace(ref.conj().T @ u) / 4
    phase = float(-np.angle(overlap) % (2 * np.pi))
    return theta, phase


def canonical_class_vector(u: np.ndarray) -> np.ndarray:
    """Entangler angles of ``u`` reduced to a local-equivalence representative:
    each folded into ``[0, pi/2]`` and sorted in descending order."""
    theta, _ = kak_decompose(u)
    half = theta[6:9] / 2  # exp(-i half * PP)
    red = (half + np.pi / 4) % (np.pi / 2) - np.pi / 4
    return np.sort(np.abs(2 * red))[::-1]


# ------------------------------------------------------------------ circuits


@dataclass
class Su4Gate:
    qubits: Tuple[int, int]
    theta: np.ndarray = field(default_factory=lambda: np.zeros(PARAMS_PER_GATE))
    phase: float = 0.0

    def __post_init__(self):
        i, j = self.qubits
        if i == j:
            raise ConfigurationError("gate needs two distinct qubits")
        self.qubits = (int(i), int(j))
        self.theta = np.asarray(self.theta, dtype=float).reshape(PARAMS_PER_GATE)
        self.phase = float(self.phase)

    def matrix(self) -> np.ndarray:
        return gate_matrix(self.theta, self.phase)


@dataclass
class Layer:
    topology: str
    gates: List[Su4Gate]


def layer_pairs(n: int, topology: str) -> List[Tuple[int, int]]:
    if topology == LINEAR:
        return [(q, q + 1) for q in range(n - 1)]
    if topology == ALL_TO_ALL:
        return list(combinations(range(n), 2))
    raise ConfigurationError(f"unknown layer topology {topology!r}")


@dataclass
class ParamCircuit:
    """Ordered layers of SU(4) gates. Trainable parameters are the concatenated
    gate angles; per-gate phases stay fixed."""

    num_qubits: int
    layers: List[Layer]

    @property
    def gates(self) -> List[Su4Gate]:
        return [g for layer in self.layers for g in layer.gates]

    @property
    def num_gates(self) -> int:
        return sum(len(layer.gates) for layer in self.layers)

    @property
    def num_params(self) -> int:
        return PARAMS_PER_GATE * self.num_gates

    @property
    def params(self) -> np.ndarray:
        gates = self.gates
        if not gates:
            return np.zeros(0)
        return np.concatenate([g.theta for g in gates])

    @property
    def phases(self) -> np.ndarray:
        return np.array([g.phase for g in self.gates])

    @property
    def pairs(self) -> List[Tuple[int, int]]:
        return [g.qubits for g in self.gates]

    def with_params(self, params) -> "ParamCircuit":
        params = np.asarray(params, dtype=float).reshape(-1, PARAMS_PER_GATE)
        if params.shape[0] != self.num_gates:
            raise ShapeError(f"{params.shape[0]} gates worth of parameters for {self.num_gates} gates")
        out, k = [], 0
        for layer in self.layers:
            gates = []
            for g in layer.gates:
                gates.append(Su4Gate(g.qubits, params[k].copy(), g.phase))
                k += 1
            out.append(Layer(layer.topology, gates))
        return ParamCircuit(self.num_qubits, out)

    def param_index(self, layer: int, gate: int, angle: int) -> int:
        """Flat parameter index of ``angle`` in gate ``gate`` of layer ``layer``."""
        offset = sum(len(lay.gates) for lay in self.layers[:layer])
        return PARAMS_PER_GATE * (offset + gate) + angle

    # ---------------------------------------------------------- serialization

    def to_dict(self) -> dict:
        return {
            "num_qubits": self.num_qubits,
            "layers": [
                {
                    "topology": layer.topology,
                    "gates": [
                        {"i": g.qubits[0], "j": g.qubits[1], "theta": [float(t) for t in g.theta], "phase": g.phase}
                        for g in layer.gates
                    ],
                }
                for layer in self.layers
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, doc: dict) -> "ParamCircuit":
        layers = [
            Layer(lay["topology"], [Su4Gate((g["i"], g["j"]), g["theta"], g["phase"]) for g in lay["gates"]])
            for lay in doc["layers"]
        ]
        return cls(int(doc["num_qubits"]), layers)

    @classmethod
    def from_json(cls, text: str) -> "ParamCircuit":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "ParamCircuit":
        return cls.from_json(Path(path).read_text())


def build_circuit(n: int, k: int, final_all_to_all: bool = False) -> ParamCircuit:
    """``k - 1`` linear layers followed by a final linear or all-to-all layer."""
    if n < 2:
        raise ConfigurationError("circuits need at least two qubits")
    if k < 1:
        raise ConfigurationError("circuits need at least one layer")
    layers = []
    for layer in range(k):
        topo = ALL_TO_ALL if (final_all_to_all and layer == k - 1) else LINEAR
        layers.append(Layer(topo, [Su4Gate(p) for p in layer_pairs(n, topo)]))
    return ParamCircuit(n, layers)


def init_params(
    circuit: ParamCircuit, mode: str, sigma: float = 0.01, rng: Optional[np.random.Generator] = None
) -> np.ndarray:
    """Initial angles: ``"random"`` draws U[0, 2pi); ``"near-identity"`` draws N(0, sigma^2)."""
    if sigma < 0:
        raise ConfigurationError("sigma must be non-negative")
    rng = np.random.default_rng() if rng is None else rng
    if mode == "random":
        return rng.uniform(0.0, 2 * np.pi, circuit.num_params)
    if mode in ("near-identity", "identity"):
        if sigma == 0 or mode == "identity":
            return np.zeros(circuit.num_params)
        return rng.normal(0.0, sigma, circuit.num_params)
    raise ConfigurationError(f"unknown initialization mode {mode!r}")


# ---------------------------------------------------------------- simulation


def _apply_gates(states: np.ndarray, mats: np.ndarray, pair: Tuple[int, int], n: int) -> np.ndarray:
    """Apply per-batch 4x4 matrices ``mats (P, 4, 4)`` to ``states (P, 2**n)``."""
    i, j = pair
    p = states.shape[0]
    if i > j:
        mats = mats.reshape(p, 2, 2, 2, 2).transpose(0, 2, 1, 4, 3).reshape(p, 4, 4)
        i, j = j, i
    a, b, c = 2**i, 2 ** (j - i - 1), 2 ** (n - j - 1)
    view = states.reshape(p, a, 2, b, 2, c).transpose(0, 2, 4, 1, 3, 5).reshape(p, 4, a * b * c)
    out = np.matmul(mats, view).reshape(p, 2, 2, a, b, c).transpose(0, 3, 1, 4, 2, 5)
    return out.reshape(p, -1)


def simulate_batch(circuit: ParamCircuit, params: np.ndarray, initial: Optional[np.ndarray] = None) -> np.ndarray:
    """Statevectors for a batch of parameter vectors, shape ``(P, 2**N)``."""
    n = circuit.num_qubits
    if n > MAX_QUBITS:
        raise SizeGuardError(f"{n} qubits exceeds the {MAX_QUBITS}-qubit simulation guard")
    params = np.atleast_2d(np.asarray(params, dtype=float))
    p = params.shape[0]
    if params.shape[1] != circuit.num_params:
        raise ShapeError(f"{params.shape[1]} parameters for a circuit with {circuit.num_params}")
    mats = gate_matrix(params.reshape(p, -1, PARAMS_PER_GATE), circuit.phases[None, :])
    if initial is None:
        states = np.zeros((p, 2**n), dtype=DTYPE)
        states[:, 0] = 1.0
    else:
        states = np.broadcast_to(np.asarray(initial, dtype=DTYPE), (p, 2**n)).copy()
    for g, pair in enumerate(circuit.pairs):
        states = _apply_gates(states, mats[:, g], pair, n)
    return states


def simulate(circuit: ParamCircuit, params: Optional[np.ndarray] = None) -> np.ndarray:
    """Apply all gates, layer by layer, to ``|0...0>``."""
    params = circuit.params if params is None else params
    return simulate_batch(circuit, params)[0]


def apply_gate(psi: np.ndarray, u: np.ndarray, pair: Tuple[int, int]) -> np.ndarray:
    """Apply one 4x4 matrix to a dense statevector."""
    psi = np.asarray(psi, dtype=DTYPE)
    n = int(round(np.log2(psi.size)))
    return _apply_gates(psi[None], np.asarray(u, dtype=DTYPE)[None], pair, n)[0]


def born_probabilities(psi: np.ndarray) -> np.ndarray:
    """``|<x|psi>|^2`` for every basis state."""
    return np.abs(np.asarray(psi)) ** 2
