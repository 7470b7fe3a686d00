"""Open-boundary matrix product states of qubits.

Every core has axes ``(left, physical, right)`` with physical dimension 2.
Bitstrings map to dense statevector indices with qubit 0 as the most
significant bit, i.e. ``index = sum_i x_i * 2**(N-1-i)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    ConfigurationError,
    NormalizationError,
    ShapeError,
    SizeGuardError,
    UnitarityError,
)
from .linalg import DTYPE, is_unitary, svd_truncated

MAX_DENSE_QUBITS = 20
DEFAULT_SV_THRESHOLD = 5e-5

_MAGIC = b"TNMPS\x00\x01\x00"


def _qr_pos(m: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # QR with real non-negative diagonal in R, so repeated calls are deterministic
    q, r = np.linalg.qr(m)
    d = np.diagonal(r).copy()
    phase = np.where(np.abs(d) > 0, d / np.where(np.abs(d) > 0, np.abs(d), 1), 1.0)
    q = q * phase
    r = phase.conj()[:, None] * r
    return q, r


def bits_to_array(bits, n: Optional[int] = None) -> np.ndarray:
    """Coerce a bitstring ('0101', sequence of ints, or 2D array) to an int array."""
    if isinstance(bits, str):
        arr = np.array([int(c) for c in bits], dtype=np.int64)
    else:
        arr = np.asarray(bits, dtype=np.int64)
    if n is not None and arr.shape[-1] != n:
        raise ShapeError(f"bitstring length {arr.shape[-1]} does not match {n} sites")
    if np.any((arr != 0) & (arr != 1)):
        raise ShapeError("bitstrings may only contain 0 and 1")
    return arr


def bits_to_index(bits: np.ndarray) -> np.ndarray:
    """Dense statevector index of each bitstring (qubit 0 most significant)."""
    bits = np.asarray(bits, dtype=np.int64)
    n = bits.shape[-1]
    weights = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
    return bits @ weights


@dataclass(frozen=True, eq=False)
class MPS:
    """Matrix product state with optional gauge center.

    ``gauge_center`` is ``None`` when no canonical form is known. ``chi_max`` is
    the bond ceiling used by truncating operations (``None`` means unlimited).
    """

    cores: Tuple[np.ndarray, ...]
    gauge_center: Optional[int] = None
    chi_max: Optional[int] = None

    def __post_init__(self):
        cores = tuple(np.asarray(c, dtype=DTYPE) for c in self.cores)
        if not cores:
            raise ShapeError("an MPS needs at least one site")
        for i, c in enumerate(cores):
            if c.ndim != 3 or c.shape[1] != 2:
                raise ShapeError(f"core {i} has shape {c.shape}, expected (left, 2, right)")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ShapeError("boundary bond dimensions must be 1")
        for i in range(len(cores) - 1):
            if cores[i].shape[2] != cores[i + 1].shape[0]:
                raise ShapeError(f"bond mismatch between sites {i} and {i + 1}")
        if self.gauge_center is not None and not 0 <= self.gauge_center < len(cores):
            raise ShapeError(f"gauge center {self.gauge_center} outside the chain")
        object.__setattr__(self, "cores", cores)

    @property
    def num_sites(self) -> int:
        return len(self.cores)

    def __len__(self) -> int:
        return len(self.cores)

    @property
    def bond_dims(self) -> List[int]:
        return [1] + [c.shape[2] for c in self.cores]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims)

    def _replace(self, cores, gauge_center, chi_max="keep") -> "MPS":
        return MPS(tuple(cores), gauge_center, self.chi_max if chi_max == "keep" else chi_max)

    # ------------------------------------------------------------------ gauge

    def canonicalize(self, center: int) -> "MPS":
        """Mixed canonical form with orthogonality center at ``center``; normalized."""
        n = self.num_sites
        if not 0 <= center < n:
            raise ShapeError(f"site {center} outside chain of {n}")
        cores = list(self.cores)
        if self.gauge_center is None:
            lo, hi = 0, n - 1
        else:
            lo = hi = self.gauge_center
        for i in range(lo, center):
            l, p, r = cores[i].shape
            q, rr = _qr_pos(cores[i].reshape(l * p, r))
            cores[i] = q.reshape(l, p, q.shape[1])
            cores[i + 1] = np.tensordot(rr, cores[i + 1], axes=(1, 0))
        for i in range(hi, center, -1):
            l, p, r = cores[i].shape
            q, rr = _qr_pos(cores[i].reshape(l, p * r).conj().T)
            cores[i] = q.conj().T.reshape(q.shape[1], p, r)
            cores[i - 1] = np.tensordot(cores[i - 1], rr.conj().T, axes=(2, 0))
        norm = np.linalg.norm(cores[center])
        if norm == 0:
            raise NormalizationError("state has zero norm")
        cores[center] = cores[center] / norm
        return self._replace(cores, center)

    def normalized(self) -> "MPS":
        center = 0 if self.gauge_center is None else self.gauge_center
        return self.canonicalize(center)

    def is_canonical(self, center: Optional[int] = None, atol: float = 1e-10) -> bool:
        """Check the left/right orthonormality conditions around ``center``."""
        center = self.gauge_center if center is None else center
        if center is None:
            return False
        for i, c in enumerate(self.cores):
            if i < center:
                g = np.einsum("lpr,lps->rs", c.conj(), c)
            elif i > center:
                g = np.einsum("lpr,mpr->lm", c, c.conj())
            else:
                continue
            if not np.allclose(g, np.eye(g.shape[0]), atol=atol, rtol=0):
                return False
        return True

    # --------------------------------------------------------------- evaluation

    def amplitude(self, x) -> complex:
        """``<x|psi>`` for a single bitstring."""
        bits = bits_to_array(x, self.num_sites)
        v = np.ones(1, dtype=DTYPE)
        for c, s in zip(self.cores, bits):
            v = v @ c[:, s, :]
        return complex(v[0])

    def amplitudes(self, bits) -> np.ndarray:
        """Vectorized ``<x|psi>`` for an ``(M, N)`` array of bitstrings."""
        bits = bits_to_array(bits, self.num_sites)
        bits = np.atleast_2d(bits)
        v = np.ones((bits.shape[0], 1), dtype=DTYPE)
        for i, c in enumerate(self.cores):
            mats = c.transpose(1, 0, 2)[bits[:, i]]
            v = np.einsum("ml,mlr->mr", v, mats)
        return v[:, 0]

    def to_statevector(self) -> np.ndarray:
        if self.num_sites > MAX_DENSE_QUBITS:
            raise SizeGuardError(
                f"dense vector for {self.num_sites} qubits exceeds the {MAX_DENSE_QUBITS}-qubit guard"
            )
        psi = self.cores[0].reshape(2, -1)
        for c in self.cores[1:]:
            psi = np.tensordot(psi, c, axes=(1, 0)).reshape(-1, c.shape[2])
        return psi.reshape(-1)

    def norm(self) -> float:
        return float(np.sqrt(abs(inner(self, self))))

    # ---------------------------------------------------------------- updates

    def truncate(self, chi_max: Optional[int] = None, sv_threshold: float = 0.0) -> "MPS":
        """Sequential-SVD truncation of every bond; output is normalized with center 0."""
        if chi_max is not None and chi_max < 1:
            raise ConfigurationError("chi_max must be at least 1")
        n = self.num_sites
        cores = list(self.canonicalize(n - 1).cores)
        for i in range(n - 1, 0, -1):
            l, p, r = cores[i].shape
            res = svd_truncated(cores[i].reshape(l, p * r), chi_max, sv_threshold)
            cores[i] = res.right.reshape(res.rank, p, r)
            cores[i - 1] = np.tensordot(cores[i - 1], res.left * res.singular_values, axes=(2, 0))
        cores[0] = cores[0] / np.linalg.norm(cores[0])
        return MPS(tuple(cores), 0, chi_max if chi_max is not None else self.chi_max)

    def apply_two_site_gate(
        self,
        u: np.ndarray,
        site: int,
        chi_max: Optional[int] = None,
        sv_threshold: float = 0.0,
        check: bool = True,
    ) -> "MPS":
        """Apply a 4x4 gate to sites ``(site, site + 1)`` and re-split the bond.

        The gate acts on the local basis ``|x_site x_site+1>`` with ``x_site`` as
        the more significant bit. The gauge center ends on ``site + 1``.
        """
        n = self.num_sites
        if not 0 <= site < n - 1:
            raise ShapeError(f"no bond ({site}, {site + 1}) in a chain of {n}")
        u = np.asarray(u, dtype=DTYPE)
        if u.shape != (4, 4) or (check and not is_unitary(u, 1e-10)):
            raise UnitarityError("two-site gate must be a 4x4 unitary")
        psi = self.canonicalize(site)
        cores = list(psi.cores)
        theta = np.tensordot(cores[site], cores[site + 1], axes=(2, 0))
        l, r = theta.shape[0], theta.shape[3]
        theta = np.einsum("abcd,lcdr->labr", u.reshape(2, 2, 2, 2), theta)
        res = svd_truncated(theta.reshape(l * 2, 2 * r), chi_max, sv_threshold)
        s = res.singular_values / np.linalg.norm(res.singular_values)
        cores[site] = res.left.reshape(l, 2, res.rank)
        cores[site + 1] = (s[:, None] * res.right).reshape(res.rank, 2, r)
        return psi._replace(cores, site + 1)

    # --------------------------------------------------------------- sampling

    def sample(self, rng: np.random.Generator, n: Optional[int] = None) -> np.ndarray:
        """Draw bitstrings from ``|<x|psi>|^2`` by sequential conditional sampling.

        Returns a length-N int array, or an ``(n, N)`` array when ``n`` is given.
        """
        psi = self.canonicalize(0)
        m = 1 if n is None else n
        out = np.empty((m, self.num_sites), dtype=np.int64)
        env = np.ones((m, 1), dtype=DTYPE)
        for i, c in enumerate(psi.cores):
            w0 = env @ c[:, 0, :]
            w1 = env @ c[:, 1, :]
            p0 = np.sum(np.abs(w0) ** 2, axis=1)
            p1 = np.sum(np.abs(w1) ** 2, axis=1)
            prob1 = p1 / (p0 + p1)
            bit = rng.random(m) < prob1
            out[:, i] = bit
            w = np.where(bit[:, None], w1, w0)
            env = w / np.linalg.norm(w, axis=1, keepdims=True)
        return out[0] if n is None else out

    # ---------------------------------------------------------- serialization

    def save(self, path) -> None:
        Path(path).write_bytes(to_bytes(self))

    @classmethod
    def load(cls, path) -> "MPS":
        return from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------- constructors


def from_statevector(
    psi: np.ndarray, chi_max: Optional[int] = None, sv_threshold: float = 1e-14
) -> MPS:
    """Sequential-SVD factorization of a normalized ``2**N`` statevector.

    The default threshold only drops singular values at rounding level, so exact
    product states come out with unit bonds.
    """
    psi = np.asarray(psi, dtype=DTYPE).reshape(-1)
    n = int(round(np.log2(psi.size)))
    if psi.size != 2**n or n < 1:
        raise ShapeError(f"statevector length {psi.size} is not a power of two")
    if n > MAX_DENSE_QUBITS:
        raise SizeGuardError(f"{n} qubits exceeds the {MAX_DENSE_QUBITS}-qubit guard")
    if abs(np.linalg.norm(psi) - 1.0) > 1e-8:
        raise NormalizationError(f"statevector norm {np.linalg.norm(psi):.12f} != 1")
    cores = []
    rest = psi.reshape(1, -1)
    for _ in range(n - 1):
        left = rest.shape[0]
        res = svd_truncated(rest.reshape(left * 2, -1), chi_max, sv_threshold)
        cores.append(res.left.reshape(left, 2, res.rank))
        rest = res.singular_values[:, None] * res.right
    cores.append(rest.reshape(rest.shape[0], 2, 1) / np.linalg.norm(rest))
    return MPS(tuple(cores), n - 1, chi_max)


def product_state(bits) -> MPS:
    bits = bits_to_array(bits)
    cores = []
    for b in bits:
        c = np.zeros((1, 2, 1), dtype=DTYPE)
        c[0, b, 0] = 1.0
        cores.append(c)
    return MPS(tuple(cores), 0)


def product_state_from_vectors(vectors: Sequence[np.ndarray]) -> MPS:
    """Product state of single-qubit vectors (each normalized here)."""
    cores = []
    for v in vectors:
        v = np.asarray(v, dtype=DTYPE)
        cores.append((v / np.linalg.norm(v)).reshape(1, 2, 1))
    return MPS(tuple(cores), 0)


def ghz_state(n: int) -> MPS:
    if n < 2:
        raise ConfigurationError("GHZ state needs at least two qubits")
    first = np.zeros((1, 2, 2), dtype=DTYPE)
    first[0, 0, 0] = first[0, 1, 1] = 1 / np.sqrt(2)
    mid = np.zeros((2, 2, 2), dtype=DTYPE)
    mid[0, 0, 0] = mid[1, 1, 1] = 1.0
    last = np.zeros((2, 2, 1), dtype=DTYPE)
    last[0, 0, 0] = last[1, 1, 0] = 1.0
    return MPS((first,) + (mid,) * (n - 2) + (last,), 0)


def random_mps(n: int, chi: int, rng: np.random.Generator, real: bool = False) -> MPS:
    """Random normalized MPS with bond dimensions ``min(chi, 2**k, 2**(n-k))``."""
    dims = [min(chi, 2**k, 2 ** (n - k)) for k in range(n + 1)]
    cores = []
    for i in range(n):
        shape = (dims[i], 2, dims[i + 1])
        c = rng.standard_normal(shape)
        if not real:
            c = c + 1j * rng.standard_normal(shape)
        cores.append(c)
    return MPS(tuple(cores), None, chi).canonicalize(0)


# -------------------------------------------------------------------- overlaps


def inner(a: MPS, b: MPS) -> complex:
    """``<a|b>`` by transfer-matrix contraction."""
    if a.num_sites != b.num_sites:
        raise ShapeError(f"cannot take overlap of {a.num_sites}- and {b.num_sites}-site states")
    env = np.ones((1, 1), dtype=DTYPE)
    for ca, cb in zip(a.cores, b.cores):
        env = np.einsum("ab,apc,bpd->cd", env, ca.conj(), cb)
    return complex(env[0, 0])


def fidelity(a: MPS, b: MPS) -> float:
    """``|<a|b>|`` for normalized states."""
    return abs(inner(a, b))


def two_site_transition(bra: MPS, ket: MPS, site: int) -> np.ndarray:
    """Two-site reduced transition operator ``Tr_rest |ket><bra|`` on ``(site, site+1)``.

    Returned as a 4x4 matrix ``F[out, in]`` with ``tr(g @ F) == <bra| g |ket>`` for any
    gate ``g`` acting on those sites.
    """
    n = ket.num_sites
    left = np.ones((1, 1), dtype=DTYPE)
    for i in range(site):
        left = np.einsum("ab,apc,bpd->cd", left, bra.cores[i].conj(), ket.cores[i])
    right = np.ones((1, 1), dtype=DTYPE)
    for i in range(n - 1, site + 1, -1):
        right = np.einsum("cd,apc,bpd->ab", right, bra.cores[i].conj(), ket.cores[i])
    tk = np.tensordot(ket.cores[site], ket.cores[site + 1], axes=(2, 0))
    tb = np.tensordot(bra.cores[site], bra.cores[site + 1], axes=(2, 0))
    # F[(k1,k2),(b1,b2)] = sum left[a,b] ket[b,k1,k2,d] right[c,d] conj(bra[a,b1,b2,c])
    f = np.einsum("ab,bkld,cd,amnc->klmn", left, tk, right, tb.conj())
    return f.reshape(4, 4)


# --------------------------------------------------------------- serialization


def to_bytes(mps: MPS) -> bytes:
    """Binary container: magic, N, gauge center, chi_max, per-core shapes, then
    little-endian complex128 data of every core in C order."""
    center = -1 if mps.gauge_center is None else mps.gauge_center
    chi = 0 if mps.chi_max is None else mps.chi_max
    parts = [_MAGIC, struct.pack("<Iii", mps.num_sites, center, chi)]
    for c in mps.cores:
        parts.append(struct.pack("<III", *c.shape))
    for c in mps.cores:
        parts.append(np.ascontiguousarray(c, dtype="<c16").tobytes())
    return b"".join(parts)


def from_bytes(data: bytes) -> MPS:
    if data[: len(_MAGIC)] != _MAGIC:
        raise ShapeError("not an MPS container (bad magic header)")
    off = len(_MAGIC)
    n, center, chi = struct.unpack_from("<Iii", data, off)
    off += 12
    shapes = []
    for _ in range(n):
        shapes.append(struct.unpack_from("<III", data, off))
        off += 12
    cores = []
    for shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<c16", count=count, offset=off).reshape(shape)
        cores.append(arr.astype(DTYPE))
        off += 16 * count
    if off != len(data):
        raise ShapeError("trailing bytes in MPS container")
    return MPS(tuple(cores), None if center < 0 else center, None if chi == 0 else chi)


def to_text(mps: MPS) -> str:
    """Lossless human-readable dump (floats written with ``repr``)."""
    lines = [
        f"MPS sites={mps.num_sites} gauge_center={mps.gauge_center} chi_max={mps.chi_max}"
    ]
    for i, c in enumerate(mps.cores):
        lines.append(f"core {i} shape {c.shape[0]} {c.shape[1]} {c.shape[2]}")
        for z in c.reshape(-1):
            lines.append(f"{float(z.real)!r} {float(z.imag)!r}")
    return "\n".join(lines) + "\n"


def from_text(text: str) -> MPS:
    lines = text.strip().splitlines()
    header = dict(kv.split("=") for kv in lines[0].split()[1:])
    n = int(header["sites"])
    center = None if header["gauge_center"] == "None" else int(header["gauge_center"])
    chi = None if header["chi_max"] == "None" else int(header["chi_max"])
    pos = 1
    cores = []
    for _ in range(n):
        shape = tuple(int(t) for t in lines[pos].split()[3:6])
        pos += 1
        count = int(np.prod(shape))
        vals = [complex(float(a), float(b)) for a, b in (ln.split() for ln in lines[pos : pos + count])]
        pos += count
        cores.append(np.array(vals, dtype=DTYPE).reshape(shape))
    return MPS(tuple(cores), center, chi)


def save_text(mps: MPS, path) -> None:
    Path(path).write_text(to_text(mps))


def all_bitstrings(n: int) -> np.ndarray:
    """All ``2**n`` bitstrings in dense-index order."""
    idx = np.arange(2**n, dtype=np.int64)
    return (idx[:, None] >> np.arange(n - 1, -1, -1)) & 1

