import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tn2pqc.errors import ConfigurationError
from tn2pqc.mps import MPS, product_state, product_state_from_vectors, random_mps
from tn2pqc.tasks import Dataset, cardinality_dataset, kl_divergence
from tn2pqc.tnbm import TnbmConfig, merged_kl, tnbm_kl, train_tnbm, two_site_gradient

from conftest import fd_gradient


class TestGradient:
    def test_uniform_target_is_stationary(self):
        ds = Dataset(4, np.array(list(itertools.product((0, 1), repeat=4))))
        plus = product_state_from_vectors([np.array([1, 1]) / np.sqrt(2)] * 4).canonicalize(1)
        assert np.linalg.norm(two_site_gradient(plus, ds, 1)) < 1e-10

    def test_perfect_single_string(self):
        ds = Dataset.from_strings(["0000"])
        assert np.linalg.norm(two_site_gradient(product_state([0] * 4).canonicalize(2), ds, 2)) < 1e-10

    @pytest.mark.parametrize("site", [0, 2, 4])
    def test_matches_finite_differences(self, rng, site):
        ds = cardinality_dataset(6, 3)
        m = random_mps(6, 4, rng).canonicalize(site)
        g = two_site_gradient(m, ds, site)
        fd = fd_gradient(m, ds, site)
        assert np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(fd)

    def test_descent_direction(self, rng):
        ds = cardinality_dataset(6, 3)
        m = random_mps(6, 4, rng).canonicalize(2)
        theta = np.tensordot(m.cores[2], m.cores[3], axes=(2, 0))
        g = two_site_gradient(m, ds, 2)
        assert merged_kl(theta - 1e-4 * g, m, ds, 2) < merged_kl(theta, m, ds, 2)


class TestTraining:
    def test_cardinality_8(self):
        mps, history = train_tnbm(cardinality_dataset(8, 4), TnbmConfig(chi_max=8, sweeps=50))
        assert history[-1] < 0.1
        assert np.isclose(mps.norm(), 1)
        assert np.all(np.diff(history) <= 1e-6)
        assert len(history) == 51

    def test_product_target(self):
        ds = Dataset.from_strings(["101101"])
        _, history = train_tnbm(ds, TnbmConfig(chi_max=1, sweeps=30, eta=0.05))
        assert history[-1] < 1e-4

    def test_kl_matches_dense(self):
        ds = cardinality_dataset(6, 2)
        mps, history = train_tnbm(ds, TnbmConfig(chi_max=3, sweeps=3))
        assert np.isclose(history[-1], kl_divergence(np.abs(mps.to_statevector()) ** 2, ds))
        assert tnbm_kl(mps, ds) >= 0

    def test_bond_dims_respect_ceiling(self):
        mps, _ = train_tnbm(cardinality_dataset(8, 4), TnbmConfig(chi_max=3, sweeps=5))
        assert mps.max_bond <= 3

    def test_deterministic(self):
        cfg = TnbmConfig(chi_max=4, sweeps=3, seed=7)
        a = train_tnbm(cardinality_dataset(6, 3), cfg)
        b = train_tnbm(cardinality_dataset(6, 3), cfg)
        assert a[1] == b[1]
        assert all(np.array_equal(x, y) for x, y in zip(a[0].cores, b[0].cores))

    @pytest.mark.slow
    def test_kl_decreases_with_chi(self):
        ds = cardinality_dataset(12, 6)
        finals = []
        for chi in (2, 3, 4, 5):
            runs = [train_tnbm(ds, TnbmConfig(chi_max=chi, sweeps=50, seed=s))[1][-1] for s in range(3)]
            finals.append(np.median(runs))
        assert all(a > b for a, b in zip(finals, finals[1:]))

    @pytest.mark.parametrize(
        "kwargs", [dict(eta=0), dict(sweeps=0), dict(chi_max=0)]
    )
    def test_config_validation(self, kwargs):
        with pytest.raises(ConfigurationError):
            TnbmConfig(**kwargs)

    @settings(max_examples=10)
    @given(st.integers(0, 2**31 - 1))
    def test_history_non_increasing(self, seed):
        _, history = train_tnbm(cardinality_dataset(6, 3), TnbmConfig(chi_max=4, sweeps=8, seed=seed))
        assert np.all(np.diff(history) <= 1e-6)
        assert min(history) >= 0
