import numpy as np
import pytest
from hypothesis import given, strategies as st

from tn2pqc import mps as M
from tn2pqc.errors import ConfigurationError, NormalizationError, ShapeError, SizeGuardError, UnitarityError
from tn2pqc.linalg import haar_unitary
from tn2pqc.tasks import cardinality_dataset
from tn2pqc.tnbm import TnbmConfig, train_tnbm

from conftest import dense_from_cores, embed_two_qubit, random_state

CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def assert_gauge(mps):
    c = mps.gauge_center
    for i, core in enumerate(mps.cores):
        l, _, r = core.shape
        if i < c:
            m = core.reshape(l * 2, r)
            assert np.allclose(m.conj().T @ m, np.eye(r), atol=1e-10)
        elif i > c:
            m = core.reshape(l, 2 * r)
            assert np.allclose(m @ m.conj().T, np.eye(l), atol=1e-10)
    assert np.isclose(mps.norm(), 1, atol=1e-10)


class TestFromStatevector:
    def test_product_state(self):
        psi = np.zeros(16)
        psi[0] = 1
        m = M.from_statevector(psi)
        assert m.bond_dims == [1] * 5
        assert np.isclose(m.amplitude("0000"), 1)

    def test_bell(self):
        m = M.from_statevector(np.array([1, 0, 0, 1]) / np.sqrt(2))
        assert m.bond_dims == [1, 2, 1]

    def test_random_round_trip(self, rng):
        psi = random_state(8, rng)
        m = M.from_statevector(psi, chi_max=16)
        assert abs(np.vdot(psi, m.to_statevector())) >= 1 - 1e-10

    def test_unnormalized_raises(self):
        with pytest.raises(NormalizationError):
            M.from_statevector(np.array([1.0, 1.0, 0, 0]))


class TestToStatevector:
    def test_product_basis_vector(self):
        vec = M.product_state([1, 0, 1, 0]).to_statevector()
        assert np.isclose(vec[0b1010], 1) and np.isclose(np.linalg.norm(vec), 1)

    def test_ghz(self):
        vec = M.ghz_state(5).to_statevector()
        assert np.isclose(vec[0], 2**-0.5) and np.isclose(vec[-1], 2**-0.5)

    def test_trained_tnbm_matches_amplitudes(self):
        mps, _ = train_tnbm(cardinality_dataset(6, 3), TnbmConfig(sweeps=5, chi_max=4))
        vec = mps.to_statevector()
        assert np.allclose(vec, mps.amplitudes(M.all_bitstrings(6)), atol=1e-10)

    def test_matches_naive_contraction(self, rng):
        m = M.random_mps(6, 3, rng)
        assert np.allclose(m.to_statevector(), dense_from_cores(m.cores), atol=1e-12)

    def test_size_guard(self):
        with pytest.raises(SizeGuardError):
            M.product_state([0] * 21).to_statevector()


class TestAmplitude:
    def test_zero_state(self):
        assert M.product_state([0] * 5).amplitude("00000") == 1

    def test_ghz_unsupported(self):
        assert M.ghz_state(5).amplitude("01000") == 0

    def test_random_against_dense(self, rng):
        m = M.random_mps(7, 4, rng)
        vec = m.to_statevector()
        for idx, bits in enumerate(M.all_bitstrings(7)):
            assert np.isclose(m.amplitude(bits), vec[idx], atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            M.ghz_state(3).amplitude("01")


class TestInner:
    def test_self(self, rng):
        m = M.random_mps(6, 4, rng)
        assert np.isclose(M.inner(m, m), 1)

    def test_orthogonal_products(self):
        assert M.inner(M.product_state([0] * 4), M.product_state([1] * 4)) == 0

    def test_against_dense(self, rng):
        a, b = M.random_mps(8, 4, rng), M.random_mps(8, 3, rng)
        assert np.isclose(M.inner(a, b), np.vdot(a.to_statevector(), b.to_statevector()), atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            M.inner(M.ghz_state(3), M.ghz_state(4))


class TestCanonicalize:
    def test_idempotent(self, rng):
        m = M.random_mps(6, 4, rng).canonicalize(2)
        again = m.canonicalize(2)
        assert np.isclose(M.fidelity(m, again), 1)
        for a, b in zip(m.cores, again.cores):
            assert np.allclose(np.abs(a), np.abs(b), atol=1e-10)

    @pytest.mark.parametrize("center", [0, 3, 5])
    def test_state_and_gauge(self, rng, center):
        m = M.random_mps(6, 4, rng)
        c = m.canonicalize(center)
        assert c.gauge_center == center
        assert_gauge(c)
        assert np.allclose(c.to_statevector(), m.to_statevector(), atol=1e-10)


class TestTruncate:
    def test_noop_at_low_bond(self):
        g = M.ghz_state(5)
        t = g.truncate(4)
        assert t.bond_dims == g.bond_dims and np.isclose(M.fidelity(g, t), 1)

    def test_ghz_to_product(self):
        g = M.ghz_state(5)
        assert np.isclose(M.fidelity(g.truncate(1), g), 2**-0.5)

    def test_ground_state_fidelity_increases(self):
        from tn2pqc.ground_state import dmrg_ground_state, heisenberg_mpo

        gs = dmrg_ground_state(heisenberg_mpo(3, 3), 16).mps
        fids = [M.fidelity(gs.truncate(chi), gs) for chi in (2, 4, 8)]
        assert fids[0] < fids[1] < fids[2]

    def test_bad_chi(self):
        with pytest.raises(ConfigurationError):
            M.ghz_state(3).truncate(0)

    @given(st.integers(0, 2**31 - 1), st.integers(1, 6))
    def test_fidelity_monotone_in_chi(self, seed, chi):
        m = M.random_mps(7, 8, np.random.default_rng(seed))
        f1 = M.fidelity(m.truncate(chi), m)
        f2 = M.fidelity(m.truncate(chi + 1), m)
        assert f2 >= f1 - 1e-10
        t = m.truncate(chi)
        assert t.max_bond <= chi
        assert_gauge(t)


class TestSample:
    def test_zero_state(self, rng):
        assert np.all(M.product_state([0] * 4).sample(rng, 100) == 0)

    def test_ghz_frequencies(self, rng):
        s = M.ghz_state(4).sample(rng, 100_000)
        zeros = np.all(s == 0, axis=1).mean()
        ones = np.all(s == 1, axis=1).mean()
        assert zeros + ones == 1
        assert abs(zeros - 0.5) < 0.01

    def test_trained_tnbm_distribution(self, rng):
        mps, _ = train_tnbm(cardinality_dataset(6, 3), TnbmConfig(sweeps=10, chi_max=4))
        q = np.abs(mps.to_statevector()) ** 2
        s = mps.sample(rng, 100_000)
        counts = np.bincount(M.bits_to_index(s), minlength=64) / 100_000
        assert 0.5 * np.abs(counts - q).sum() < 0.02


class TestApplyTwoSiteGate:
    def test_identity(self, rng):
        m = M.random_mps(5, 3, rng)
        assert np.isclose(M.fidelity(m.apply_two_site_gate(np.eye(4), 2), m), 1)

    def test_cnot_makes_bell(self):
        plus = M.product_state_from_vectors([np.array([1, 1]) / np.sqrt(2), np.array([1, 0])])
        out = plus.apply_two_site_gate(CNOT, 0)
        assert np.allclose(out.to_statevector(), np.array([1, 0, 0, 1]) / np.sqrt(2))
        assert out.bond_dims == [1, 2, 1]

    def test_inverse_pair(self, rng):
        m = M.random_mps(6, 4, rng)
        u = haar_unitary(4, rng)
        back = m.apply_two_site_gate(u, 3).apply_two_site_gate(u.conj().T, 3)
        assert M.fidelity(back, m) >= 1 - 1e-10

    def test_against_dense(self, rng):
        m = M.random_mps(6, 3, rng)
        u = haar_unitary(4, rng)
        expect = embed_two_qubit(u, 2, 3, 6) @ m.to_statevector()
        out = m.apply_two_site_gate(u, 2)
        assert abs(np.vdot(expect, out.to_statevector())) >= 1 - 1e-10
        assert_gauge(out)

    def test_non_unitary(self):
        with pytest.raises(UnitarityError):
            M.ghz_state(3).apply_two_site_gate(2 * np.eye(4), 0)


class TestSerialization:
    def test_binary_round_trip(self, rng, tmp_path):
        m = M.random_mps(5, 3, rng).canonicalize(2)
        m.save(tmp_path / "m.bin")
        back = M.MPS.load(tmp_path / "m.bin")
        assert back.gauge_center == 2 and back.chi_max == m.chi_max
        for a, b in zip(m.cores, back.cores):
            assert np.array_equal(a, b)

    def test_binary_layout(self):
        data = M.to_bytes(M.product_state([1, 0]))
        assert data[:8] == b"TNMPS\x00\x01\x00"
        assert len(data) == 8 + 12 + 2 * 12 + 2 * 2 * 16

    def test_text_round_trip_is_lossless(self, rng):
        m = M.random_mps(4, 2, rng)
        back = M.from_text(M.to_text(m))
        for a, b in zip(m.cores, back.cores):
            assert np.array_equal(a, b)

    def test_bad_magic(self):
        with pytest.raises(ShapeError):
            M.from_bytes(b"nonsense" * 4)
