"""Dense complex tensor helpers: contraction, truncated SVD, polar projection
and smallest-eigenpair solvers.

Tensors are plain ``numpy.ndarray`` objects of dtype ``complex128``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import (
    ConfigurationError,
    ContractionError,
    DegeneratePolarError,
    NumericalInputError,
    ShapeError,
    SymmetryError,
)

DTYPE = np.complex128

# relative smallest/largest singular value below which a polar factor is not unique
POLAR_RANK_TOL = 1e-13
DENSE_EIGH_LIMIT = 4096


def as_tensor(x) -> np.ndarray:
    """Return ``x`` as a contiguous complex128 array, rejecting non-finite data."""
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    if not np.all(np.isfinite(arr)):
        raise NumericalInputError("tensor contains non-finite entries")
    return arr


def contract(a: np.ndarray, b: np.ndarray, axis_pairs: Sequence[Tuple[int, int]]) -> np.ndarray:
    """Contract ``a`` and ``b`` over the listed ``(axis_of_a, axis_of_b)`` pairs.

    Free axes of ``a`` come first in the result, followed by the free axes of ``b``,
    each in their original order.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    axes_a = [p[0] % a.ndim for p in axis_pairs] if a.ndim else []
    axes_b = [p[1] % b.ndim for p in axis_pairs] if b.ndim else []
    for ia, ib in zip(axes_a, axes_b):
        if a.shape[ia] != b.shape[ib]:
            raise ContractionError(
                f"cannot pair axis {ia} (length {a.shape[ia]}) with axis {ib} (length {b.shape[ib]})"
            )
    return np.tensordot(a, b, axes=(axes_a, axes_b))


@dataclass(frozen=True)
class SvdResult:
    """Truncated singular value decomposition ``m ~= left @ diag(singular_values) @ right``."""

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray
    discarded_weight: float

    @property
    def rank(self) -> int:
        return len(self.singular_values)

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singular_values) @ self.right


def _svd(m: np.ndarray):
    try:
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")


def svd_truncated(
    m: np.ndarray, chi_max: Optional[int] = None, sv_threshold: float = 0.0
) -> SvdResult:
    """Truncated SVD of a matrix.

    Keeps at most ``chi_max`` singular values (``None`` means unlimited) and drops
    every value that falls below ``sv_threshold`` once the matrix is scaled to unit
    Frobenius norm. At least one singular value is always kept.
    """
    m = np.asarray(m, dtype=DTYPE)
    if m.ndim != 2 or m.size == 0:
        raise ShapeError(f"expected a non-empty matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericalInputError("cannot factorize a matrix with non-finite entries")
    if chi_max is not None and chi_max < 1:
        raise ConfigurationError("chi_max must be positive")
    if sv_threshold < 0:
        raise ConfigurationError("sv_threshold must be non-negative")

    u, s, vh = _svd(m)
    norm = np.sqrt(np.sum(s**2))
    keep = len(s)
    if chi_max is not None:
        keep = min(keep, chi_max)
    if sv_threshold > 0 and norm > 0:
        above = int(np.count_nonzero(s / norm >= sv_threshold))
        keep = min(keep, above)
    keep = max(keep, 1)
    discarded = float(np.sum(s[keep:] ** 2))
    return SvdResult(u[:, :keep], s[:keep], vh[:keep, :], discarded)


def closest_unitary(m: np.ndarray) -> np.ndarray:
    """Unitary polar factor ``U @ Vh`` of ``m = U S Vh``.

    This is the unitary ``W`` maximizing ``Re tr(m^dagger W)``.
    """
    m = as_tensor(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"closest_unitary needs a square matrix, got {m.shape}")
    u, s, vh = _svd(m)
    if s[0] == 0 or s[-1] <= POLAR_RANK_TOL * s[0]:
        raise DegeneratePolarError(
            f"matrix is rank deficient (singular values {s[0]:.3e} ... {s[-1]:.3e})"
        )
    return u @ vh


def is_unitary(u: np.ndarray, atol: float = 1e-10) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return bool(np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=atol, rtol=0))


def _check_hermitian(h, atol):
    if scipy.sparse.issparse(h):
        diff = abs(h - h.conj().T)
        dev = diff.max() if diff.nnz else 0.0
    else:
        dev = np.max(np.abs(h - h.conj().T)) if h.size else 0.0
    if dev > atol:
        raise SymmetryError(f"matrix is not hermitian (max deviation {dev:.3e})")


def eigh_smallest(h, k: int = 1, tol: float = 1e-12) -> Tuple[np.ndarray, np.ndarray]:
    """The ``k`` smallest eigenpairs of a hermitian matrix (dense or scipy sparse).

    Returns ascending eigenvalues and a matrix whose columns are the eigenvectors.
    Dense matrices up to ``DENSE_EIGH_LIMIT`` use LAPACK; larger or sparse
    inputs go through Lanczos (ARPACK).
    """
    dim = h.shape[0]
    if h.ndim != 2 or h.shape[1] != dim:
        raise ShapeError(f"expected a square matrix, got {h.shape}")
    if not 1 <= k <= dim:
        raise ValueError(f"k must lie in [1, {dim}]")
    _check_hermitian(h, 1e-10)

    if not scipy.sparse.issparse(h) and (dim <= DENSE_EIGH_LIMIT or k >= dim - 1):
        h = np.asarray(h, dtype=DTYPE)
        w, v = scipy.linalg.eigh(h, subset_by_index=[0, k - 1])
        return w, v
    w, v = scipy.sparse.linalg.eigsh(h, k=k, which="SA", tol=tol)
    order = np.argsort(w)
    return w[order], v[:, order]


def lanczos_smallest(matvec, dim: int, v0: np.ndarray, tol: float = 1e-10):
    """Smallest eigenpair of an implicit hermitian operator via ARPACK."""
    op = scipy.sparse.linalg.LinearOperator((dim, dim), matvec=matvec, dtype=DTYPE)
    w, v = scipy.sparse.linalg.eigsh(op, k=1, which="SA", v0=v0, tol=tol)
    return float(w[0]), v[:, 0]


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))
