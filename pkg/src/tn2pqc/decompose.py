"""Decomposition of an MPS into linear layers of two-qubit unitaries.

Layers are extracted one at a time from the χ=2 truncation of the current
residual, and all layers found so far are refined by sweeping over gates and
replacing each with the polar factor of its environment. Stacks are stored in
circuit-execution order: ``layers[0]`` is the newest layer and acts first on
``|0...0>``, ``layers[-1]`` was extracted from the target itself.

Within a layer the gate on ``(q, q+1)`` is stored at position ``q`` and gates
run from ``(0, 1)`` to ``(N-2, N-1)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .circuit import LINEAR, Layer, ParamCircuit, Su4Gate, kak_decompose
from .errors import ConfigurationError, DegeneratePolarError, ShapeError
from .linalg import DTYPE, closest_unitary
from .mps import MPS, product_state, two_site_transition

log = logging.getLogger(__name__)

EXACT_THRESHOLD = 1e-14
DEFAULT_RESIDUAL_THRESHOLD = 1e-10


@dataclass
class LayerStack:
    layers: List[List[np.ndarray]] = field(default_factory=list)
    fidelity_history: List[float] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def copy(self) -> "LayerStack":
        return LayerStack([[u.copy() for u in layer] for layer in self.layers], list(self.fidelity_history))


def _complete_unitary(columns: dict) -> np.ndarray:
    """4x4 unitary with the given ``{index: column}`` entries; the remaining columns
    span the orthogonal complement (QR against the standard basis), each with its
    largest-magnitude entry made real positive."""
    fixed = sorted(columns)
    v = np.column_stack([columns[c] for c in fixed]) if fixed else np.zeros((4, 0), dtype=DTYPE)
    q, _ = np.linalg.qr(np.hstack([v, np.eye(4, dtype=DTYPE)]))
    comp = q[:, len(fixed) : 4]
    out = np.zeros((4, 4), dtype=DTYPE)
    for c in fixed:
        out[:, c] = columns[c]
    free = [c for c in range(4) if c not in columns]
    for k, c in enumerate(free):
        col = comp[:, k]
        big = col[np.argmax(np.abs(col))]
        out[:, c] = col * (abs(big) / big)
    return out


def extract_layer(mps: MPS) -> List[np.ndarray]:
    """Staircase layer preparing the χ=2 truncation of ``mps`` from ``|0...0>``."""
    n = mps.num_sites
    if n < 2:
        raise ShapeError("layers need at least two qubits")
    t = mps.truncate(2)  # right-canonical, center 0
    cores = []
    for c in t.cores:
        pad = np.zeros((2, 2, 2), dtype=DTYPE)
        pad[: c.shape[0], :, : c.shape[2]] = c
        cores.append(pad)
    gates = []
    for q in range(n - 1):
        if q == n - 2:
            block = np.einsum("asb,btc->astc", cores[q], cores[q + 1])[:, :, :, 0]
        else:
            block = cores[q]
        inputs = 1 if q == 0 else t.bond_dims[q]
        cols = {2 * a: block[a].reshape(4) for a in range(inputs)}
        gates.append(_complete_unitary(cols))
    return gates


def identity_layer(n: int) -> List[np.ndarray]:
    return [np.eye(4, dtype=DTYPE) for _ in range(n - 1)]


def _inverse_gate_sequence(layers: Sequence[Sequence[np.ndarray]]):
    """``(site, matrix)`` in the order the inverse stack acts on the target."""
    seq = []
    for layer in reversed(layers):
        for q in range(len(layer) - 1, -1, -1):
            seq.append((q, layer[q].conj().T))
    return seq


def apply_inverse_layers(mps: MPS, layers, sv_threshold: float = EXACT_THRESHOLD) -> MPS:
    state = mps
    for q, g in _inverse_gate_sequence(layers):
        state = state.apply_two_site_gate(g, q, None, sv_threshold, check=False)
    return state


def disentangle(mps: MPS, layer: Sequence[np.ndarray], sv_threshold: float = DEFAULT_RESIDUAL_THRESHOLD) -> MPS:
    """Apply the inverse of one layer (no bond cap), then prune with ``sv_threshold``."""
    out = apply_inverse_layers(mps, [layer])
    return out.truncate(None, sv_threshold)


def stack_fidelity(layers, target: MPS) -> float:
    """``|<0...0| U_k^+ ... U_1^+ |target>|`` for layers in execution order."""
    if layers and len(layers[0]) != target.num_sites - 1:
        raise ShapeError("layer width does not match the target")
    out = apply_inverse_layers(target, layers)
    return abs(out.amplitude([0] * target.num_sites))


def fidelity(stack: LayerStack, target: MPS) -> float:
    return stack_fidelity(stack.layers, target)


def _best_gate(env: np.ndarray, current: np.ndarray) -> np.ndarray:
    """Unitary ``g`` maximizing ``|tr(g @ env)|``, i.e. the polar factor of ``env^dagger``.

    When ``env`` is rank deficient the optimum is not unique; the part acting on
    the null space is chosen as close as possible to ``current``.
    """
    try:
        return closest_unitary(env.conj().T)
    except DegeneratePolarError:
        pass
    u, s, vh = np.linalg.svd(env.conj().T)
    if not np.all(np.isfinite(s)) or s[0] == 0:
        log.info("vanishing environment, gate left unchanged")
        return current
    r = int(np.count_nonzero(s > 1e-12 * s[0]))
    w = u[:, :r] @ vh[:r]
    if r < 4:
        u0, v0 = u[:, r:], vh[r:].conj().T
        w = w + u0 @ _nearest_unitary(u0.conj().T @ current @ v0) @ v0.conj().T
    return w


def _nearest_unitary(m: np.ndarray) -> np.ndarray:
    try:
        return closest_unitary(m)
    except DegeneratePolarError:
        u, _, vh = np.linalg.svd(m)
        return u @ vh


def _sweep(layers: List[List[np.ndarray]], target: MPS) -> float:
    """One pass over all gates in inverse-application order; returns the overlap magnitude."""
    n = target.num_sites
    seq = _inverse_gate_sequence(layers)
    # position of each sequence entry in ``layers``
    where = []
    for li in range(len(layers) - 1, -1, -1):
        for q in range(n - 2, -1, -1):
            where.append((li, q))
    upper = [None] * len(seq)
    state = product_state([0] * n)
    for m in range(len(seq) - 1, -1, -1):
        upper[m] = state
        q, g = seq[m]
        state = state.apply_two_site_gate(g.conj().T, q, None, EXACT_THRESHOLD, check=False)
    lower = target
    for m, (q, g) in enumerate(seq):
        env = two_site_transition(upper[m], lower, q)
        g_new = _best_gate(env, g)
        li, lq = where[m]
        layers[li][lq] = g_new.conj().T
        lower = lower.apply_two_site_gate(g_new, q, None, EXACT_THRESHOLD, check=False)
    return abs(lower.amplitude([0] * n))


def optimize_stack(
    stack: LayerStack, target: MPS, sweeps: int = 10, tol: float = 1e-7
) -> LayerStack:
    """Refine every gate to its locally optimal unitary given the rest of the stack.

    Runs up to ``sweeps`` passes, stopping once a pass improves the fidelity by
    less than ``tol``. Fidelity after each pass is appended to the history.
    """
    if not stack.layers:
        raise ConfigurationError("cannot optimize an empty stack")
    out = stack.copy()
    prev = stack_fidelity(out.layers, target)
    for _ in range(sweeps):
        f = _sweep(out.layers, target)
        out.fidelity_history.append(f)
        if f - prev < tol:
            break
        prev = f
    return out


@dataclass
class DecompositionResult:
    stack: LayerStack
    circuit: ParamCircuit
    layer_fidelities: List[float]
    converged: bool

    @property
    def fidelity(self) -> float:
        return self.layer_fidelities[-1]


def stack_to_circuit(stack: LayerStack) -> ParamCircuit:
    """KAK-parametrized linear layers in execution order."""
    n = len(stack.layers[0]) + 1
    layers = []
    for layer in stack.layers:
        gates = []
        for q, u in enumerate(layer):
            theta, phase = kak_decompose(u)
            gates.append(Su4Gate((q, q + 1), theta, phase))
        layers.append(Layer(LINEAR, gates))
    return ParamCircuit(n, layers)


def decompose_mps(
    target: MPS,
    max_layers: int,
    f_target: float = 1.0,
    sweeps_per_layer: int = 10,
    sv_threshold: float = DEFAULT_RESIDUAL_THRESHOLD,
) -> DecompositionResult:
    """Grow a stack of linear layers until ``max_layers`` or fidelity ``f_target``."""
    if max_layers < 1:
        raise ConfigurationError("max_layers must be at least 1")
    if not 0 < f_target <= 1:
        raise ConfigurationError("target fidelity must lie in (0, 1]")
    n = target.num_sites
    target = target.canonicalize(0)
    stack = LayerStack()
    current = abs(target.amplitude([0] * n))
    residual = target
    layer_fids: List[float] = []
    for k in range(max_layers):
        layer = extract_layer(residual)
        f = stack_fidelity([layer] + stack.layers, target)
        if f < current:
            # never let a new layer lower the fidelity
            layer, f = identity_layer(n), current
        stack.layers.insert(0, layer)
        stack.fidelity_history.append(f)
        stack = optimize_stack(stack, target, sweeps_per_layer)
        current = stack_fidelity(stack.layers, target)
        layer_fids.append(current)
        log.debug("layer %d fidelity %.10f", k + 1, current)
        if current >= f_target:
            break
        residual = apply_inverse_layers(target, stack.layers).truncate(None, sv_threshold)
    return DecompositionResult(stack, stack_to_circuit(stack), layer_fids, layer_fids[-1] >= f_target)
