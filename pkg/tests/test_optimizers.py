import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tn2pqc.circuit import build_circuit, init_params, simulate_batch
from tn2pqc.errors import ConfigurationError, EvaluationError
from tn2pqc.optimizers import CmaesConfig, CmaesState, cmaes_minimize, finite_diff_gradient
from tn2pqc.tasks import cardinality_dataset, kl_divergence_batch


def sphere(x):
    return float(np.sum(x**2))


def rosenbrock(x):
    return float(np.sum(100 * (x[1:] - x[:-1] ** 2) ** 2 + (1 - x[:-1]) ** 2))


class TestCmaes:
    def test_sphere(self):
        cfg = CmaesConfig(sigma0=0.5, lam=20, max_iterations=100, tolfun=0)
        best, history, state = cmaes_minimize(sphere, np.ones(4), cfg)
        assert sphere(best) < 1e-10
        assert state.evaluations == len(history) * 20 <= 2000

    def test_rosenbrock(self):
        cfg = CmaesConfig(sigma0=0.5, lam=20, max_iterations=1000, tolfun=0)
        best, history, state = cmaes_minimize(rosenbrock, np.zeros(5), cfg)
        assert rosenbrock(best) < 1e-6
        assert state.evaluations <= 20000

    def test_constant_stops_on_window(self):
        cfg = CmaesConfig(max_iterations=500)
        best, history, _ = cmaes_minimize(lambda x: 1.0, np.zeros(3), cfg)
        assert len(history) == 10
        assert np.linalg.norm(best) < 0.1

    def test_history_is_population_best(self):
        seen = []

        def f(x):
            v = sphere(x)
            seen.append(v)
            return v

        cfg = CmaesConfig(sigma0=0.3, lam=6, max_iterations=5, tolfun=0)
        _, history, _ = cmaes_minimize(f, np.ones(2), cfg)
        assert history == [min(seen[i : i + 6]) for i in range(0, 30, 6)]

    def test_vectorized_matches_scalar(self):
        cfg = CmaesConfig(sigma0=0.3, max_iterations=30, seed=4)
        a = cmaes_minimize(sphere, np.ones(3), cfg)
        b = cmaes_minimize(lambda pop: np.sum(pop**2, axis=1), np.ones(3), cfg, vectorized=True)
        assert a[1] == b[1] and np.array_equal(a[0], b[0])

    def test_reproducible(self):
        cfg = CmaesConfig(sigma0=0.3, max_iterations=50, seed=11)
        a = cmaes_minimize(rosenbrock, np.zeros(4), cfg)
        b = cmaes_minimize(rosenbrock, np.zeros(4), cfg)
        assert a[1] == b[1] and np.array_equal(a[0], b[0])

    def test_seed_matters(self):
        a = cmaes_minimize(sphere, np.ones(3), CmaesConfig(sigma0=0.3, max_iterations=5, seed=1))
        b = cmaes_minimize(sphere, np.ones(3), CmaesConfig(sigma0=0.3, max_iterations=5, seed=2))
        assert a[1] != b[1]

    @settings(max_examples=15)
    @given(st.sampled_from([-1e3, -2.5, 0.0, 7.0, 64.0]))
    def test_translation_invariance(self, shift):
        # shifts that are exact in floating point keep every comparison identical
        cfg = CmaesConfig(sigma0=0.25, max_iterations=40, tolfun=0, seed=3)
        a_best, a_hist, _ = cmaes_minimize(lambda x: np.sum(x**2) * 0.5, np.ones(3), cfg)
        b_best, b_hist, _ = cmaes_minimize(lambda x: np.sum(x**2) * 0.5 + shift, np.ones(3), cfg)
        assert np.array_equal(a_best, b_best)
        assert np.argmin(a_hist) == np.argmin(b_hist)

    @settings(max_examples=20)
    @given(st.integers(0, 2**31 - 1))
    def test_permutation_independence(self, seed):
        rng = np.random.default_rng(seed)
        states = [CmaesState(np.ones(5), 0.3, 8, np.random.default_rng(0)) for _ in range(2)]
        for _ in range(3):
            pop = states[0].ask()
            states[1].ask()
            losses = np.array([sphere(p) for p in pop])
            perm = rng.permutation(8)
            states[0].tell(pop, losses)
            states[1].tell(pop[perm], losses[perm])
        assert np.array_equal(states[0].mean, states[1].mean)
        assert np.array_equal(states[0].cov, states[1].cov)
        assert states[0].sigma == states[1].sigma

    def test_covariance_spd_long_run(self, caplog):
        state = CmaesState(np.ones(3), 1.0, 8, np.random.default_rng(0))
        with caplog.at_level(logging.INFO, logger="tn2pqc.optimizers"):
            for _ in range(10_000):
                pop = state.ask()
                state.tell(pop, np.sum(pop**2, axis=1))
        state.update_eigensystem()
        c = state.cov
        assert np.allclose(c, c.T, atol=1e-12)
        assert np.linalg.eigvalsh(c)[0] > 0
        assert state.sigma > 0

    def test_non_finite_loss(self):
        def f(x):
            return np.nan if x[0] > 0 else sphere(x)

        with pytest.raises(EvaluationError) as err:
            cmaes_minimize(f, np.zeros(2), CmaesConfig(sigma0=1.0, max_iterations=20))
        assert err.value.params[0] > 0

    def test_tell_shape(self):
        state = CmaesState(np.zeros(2), 1.0, 4, np.random.default_rng(0))
        pop = state.ask()
        with pytest.raises(ConfigurationError):
            state.tell(pop[:3], np.zeros(3))

    @pytest.mark.parametrize("kwargs", [dict(sigma0=0), dict(lam=3), dict(tolfun=-1)])
    def test_config_validation(self, kwargs):
        with pytest.raises(ConfigurationError):
            CmaesConfig(**kwargs)


class TestFiniteDiff:
    def test_quadratic(self):
        assert abs(finite_diff_gradient(lambda t: t[0] ** 2, np.array([1.0]), 0, 1e-6) - 2.0) < 1e-4

    def test_linear(self):
        g = finite_diff_gradient(lambda t: 3 * t[2] - t[0], np.array([0.5, 1.0, -2.0]), 2, 1e-6)
        assert abs(g - 3.0) < 1e-6

    def test_bad_epsilon(self):
        with pytest.raises(ConfigurationError):
            finite_diff_gradient(sphere, np.zeros(2), 0, 0.0)

    def test_qcbm_kl_against_richardson(self, rng):
        c = build_circuit(6, 2, False)
        theta = init_params(c, "random", rng=rng)
        ds = cardinality_dataset(6, 3)

        def loss(t):
            return float(kl_divergence_batch(np.abs(simulate_batch(c, t)) ** 2, ds)[0])

        h = 1e-5
        d = lambda e: finite_diff_gradient(loss, theta, 8, e)
        oracle = (4 * d(h / 2) - d(h)) / 3
        g = finite_diff_gradient(loss, theta, 8, 1e-8)
        assert abs(g - oracle) <= 1e-3 * abs(oracle)
