"""Dense brute-force oracles shared by the test modules."""

import itertools

import numpy as np
import pytest
from hypothesis import settings

from tn2pqc.tnbm import merged_kl

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_state(n, rng):
    psi = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return psi / np.linalg.norm(psi)


def dense_from_cores(cores):
    """Sum over all bitstrings of the core product, one amplitude at a time."""
    n = len(cores)
    out = np.zeros(2**n, dtype=complex)
    for idx, bits in enumerate(itertools.product((0, 1), repeat=n)):
        m = np.eye(1)
        for core, b in zip(cores, bits):
            m = m @ core[:, b, :]
        out[idx] = m[0, 0]
    return out


def embed_two_qubit(u, i, j, n):
    """Full 2^n matrix of a gate on qubits (i, j), qubit 0 most significant."""
    dim = 2**n
    full = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        bits = [(col >> (n - 1 - q)) & 1 for q in range(n)]
        sub_in = 2 * bits[i] + bits[j]
        for sub_out in range(4):
            amp = u[sub_out, sub_in]
            if amp == 0:
                continue
            out_bits = list(bits)
            out_bits[i], out_bits[j] = sub_out >> 1, sub_out & 1
            row = sum(b << (n - 1 - q) for q, b in enumerate(out_bits))
            full[row, col] += amp
    return full


def overlap_fidelity(a, b):
    return abs(np.vdot(a, b))


def fd_gradient(mps, ds, site, eps=1e-6):
    """Central differences of the KL loss over every real and imaginary entry."""
    theta = np.tensordot(mps.cores[site], mps.cores[site + 1], axes=(2, 0))
    grad = np.zeros(theta.shape, dtype=complex)
    for idx in np.ndindex(theta.shape):
        for unit, part in ((1.0, "re"), (1j, "im")):
            tp, tm = theta.copy(), theta.copy()
            tp[idx] += eps * unit
            tm[idx] -= eps * unit
            d = (merged_kl(tp, mps, ds, site) - merged_kl(tm, mps, ds, site)) / (2 * eps)
            grad[idx] += d if part == "re" else 1j * d
    return grad
