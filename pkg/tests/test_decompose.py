import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tn2pqc.circuit import gate_matrix, simulate
from tn2pqc.decompose import (
    LayerStack,
    decompose_mps,
    disentangle,
    extract_layer,
    fidelity,
    identity_layer,
    optimize_stack,
    stack_fidelity,
    stack_to_circuit,
)
from tn2pqc.errors import ConfigurationError, ShapeError
from tn2pqc.linalg import haar_unitary, is_unitary
from tn2pqc.mps import from_statevector, ghz_state, product_state, random_mps

from conftest import embed_two_qubit


def dense_stack_state(layers, n):
    """Statevector of the stack applied to |0...0>, gates in execution order."""
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1
    for layer in layers:
        for q, u in enumerate(layer):
            psi = embed_two_qubit(u, q, q + 1, n) @ psi
    return psi


def random_layers(n, k, rng):
    return [[haar_unitary(4, rng) for _ in range(n - 1)] for _ in range(k)]


class TestFidelity:
    def test_empty_stack_on_zero_state(self):
        assert np.isclose(stack_fidelity([], product_state([0] * 4)), 1.0)

    def test_empty_stack_on_ghz(self):
        assert np.isclose(fidelity(LayerStack(), ghz_state(5)), 1 / np.sqrt(2))

    def test_dense_oracle(self, rng):
        n = 5
        layers = random_layers(n, 2, rng)
        target = random_mps(n, 4, rng)
        dense = abs(np.vdot(dense_stack_state(layers, n), target.to_statevector()))
        assert np.isclose(stack_fidelity(layers, target), dense, atol=1e-10)

    def test_width_mismatch(self, rng):
        with pytest.raises(ShapeError):
            stack_fidelity(random_layers(4, 1, rng), random_mps(5, 2, rng))


class TestExtractLayer:
    @settings(max_examples=20)
    @given(st.integers(0, 2**31 - 1), st.integers(2, 9))
    def test_chi2_exact_in_one_layer(self, seed, n):
        target = random_mps(n, 2, np.random.default_rng(seed))
        layer = extract_layer(target)
        assert all(is_unitary(u) for u in layer)
        assert stack_fidelity([layer], target) >= 1 - 1e-9

    def test_product_state_target(self):
        target = product_state([1, 0, 1])
        assert np.isclose(stack_fidelity([extract_layer(target)], target), 1)

    def test_dense_prep(self, rng):
        target = random_mps(6, 2, rng)
        psi = dense_stack_state([extract_layer(target)], 6)
        assert np.isclose(abs(np.vdot(psi, target.to_statevector())), 1)

    def test_ghz(self):
        assert np.isclose(stack_fidelity([extract_layer(ghz_state(6))], ghz_state(6)), 1)

    def test_disentangle_to_zero_state(self, rng):
        target = random_mps(5, 2, rng)
        res = disentangle(target, extract_layer(target))
        assert np.isclose(abs(res.amplitude([0] * 5)), 1)
        assert res.max_bond == 1


class TestOptimize:
    def test_sweeps_never_decrease(self, rng):
        target = random_mps(6, 4, rng)
        stack = LayerStack([identity_layer(6), extract_layer(target)])
        start = fidelity(stack, target)
        out = optimize_stack(stack, target, sweeps=8, tol=0)
        hist = [start] + out.fidelity_history
        assert np.all(np.diff(hist) >= -1e-9)

    def test_more_sweeps_no_worse(self, rng):
        target = random_mps(6, 4, rng)
        stack = LayerStack([extract_layer(target), identity_layer(6)])
        one = fidelity(optimize_stack(stack, target, 1, tol=0), target)
        five = fidelity(optimize_stack(stack, target, 5, tol=0), target)
        assert five >= one - 1e-9

    def test_recovers_random_circuit(self, rng):
        n = 4
        layers = random_layers(n, 1, rng)
        target = from_statevector(dense_stack_state(layers, n))
        stack = LayerStack([identity_layer(n)])
        out = optimize_stack(stack, target, sweeps=60, tol=0)
        assert fidelity(out, target) > fidelity(stack, target)

    def test_input_not_mutated(self, rng):
        target = random_mps(5, 4, rng)
        stack = LayerStack([identity_layer(5)])
        optimize_stack(stack, target, 2)
        assert all(np.array_equal(u, np.eye(4)) for u in stack.layers[0])

    def test_empty_stack(self, rng):
        with pytest.raises(ConfigurationError):
            optimize_stack(LayerStack(), random_mps(4, 2, rng))


class TestDecompose:
    def test_chi2_one_layer(self, rng):
        res = decompose_mps(random_mps(7, 2, rng), 3, 1 - 1e-9)
        assert res.converged and res.stack.depth == 1

    def test_layer_fidelities_non_decreasing(self, rng):
        target = random_mps(8, 8, rng)
        res = decompose_mps(target, 4, 1.0, sweeps_per_layer=5)
        assert np.all(np.diff(res.layer_fidelities) >= -1e-9)
        assert np.all(np.diff(res.stack.fidelity_history) >= -1e-9)
        assert not res.converged

    def test_circuit_reproduces_stack(self, rng):
        target = random_mps(6, 4, rng)
        res = decompose_mps(target, 2, 1.0, sweeps_per_layer=3)
        psi = simulate(res.circuit)
        assert np.allclose(psi, dense_stack_state(res.stack.layers, 6), atol=1e-10)
        assert np.isclose(abs(np.vdot(psi, target.to_statevector())), res.fidelity, atol=1e-9)

    def test_kak_transfer_per_gate(self, rng):
        stack = LayerStack(random_layers(4, 2, rng))
        circ = stack_to_circuit(stack)
        for layer, cl in zip(stack.layers, circ.layers):
            for u, g in zip(layer, cl.gates):
                assert np.allclose(gate_matrix(g.theta, g.phase), u, atol=1e-9)

    @pytest.mark.parametrize("kwargs", [dict(max_layers=0), dict(max_layers=1, f_target=0.0)])
    def test_bad_arguments(self, rng, kwargs):
        with pytest.raises(ConfigurationError):
            decompose_mps(random_mps(4, 2, rng), **kwargs)
