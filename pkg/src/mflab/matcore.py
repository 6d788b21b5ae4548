"""Dense complex matrix primitives shared by every construction.

Matrices are plain ``numpy`` arrays of dtype complex128.  A :class:`MatTuple`
bundles same-size square matrices into one matrix model of a generator tuple.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

DENSE_SVD_MAX = 512
PSD_CLAMP = 1e-10
PSD_FAIL = 1e-6
HERMITIAN_TOL = 1e-10

_entry_cap = 2**20


class DimensionError(ValueError):
    pass


def entry_cap() -> int:
    return _entry_cap


def set_entry_cap(cap: int) -> int:
    """Set the per-matrix entry cap used by kron/direct_sum; returns the old cap."""
    global _entry_cap
    if cap < 1:
        raise ValueError("cap must be positive")
    old, _entry_cap = _entry_cap, int(cap)
    return old


def _check_cap(rows: int, cols: int):
    if rows * cols > _entry_cap:
        raise DimensionError(f"{rows}x{cols} matrix exceeds the entry cap {_entry_cap}")


def as_cmatrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def dagger(m: np.ndarray) -> np.ndarray:
    return m.conj().T


# ---------------------------------------------------------------- norms

def op_norm(m) -> float:
    """Largest singular value of a dense matrix.

    Up to DENSE_SVD_MAX rows/cols a full SVD is used.  Larger matrices use the
    top eigenvalue of m* m (or m m*, whichever is smaller) from LAPACK.
    """
    a = as_cmatrix(m)
    if a.size == 0:
        return 0.0
    if max(a.shape) <= DENSE_SVD_MAX:
        return float(np.linalg.svd(a, compute_uv=False)[0])
    g = dagger(a) @ a if a.shape[1] <= a.shape[0] else a @ dagger(a)
    k = g.shape[0]
    top = sla.eigh(g, eigvals_only=True, subset_by_index=[k - 1, k - 1])[0]
    return float(np.sqrt(max(top, 0.0)))


@dataclass(frozen=True)
class NormBracket:
    """Two-sided bracket lower <= ||M|| <= upper."""

    lower: float
    upper: float
    tol: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def certified(self) -> bool:
        return self.width <= self.tol


def _schur_bound(absm, p, q) -> float:
    # ||M|| <= sqrt(max (|M| q / p) * max (|M|^T p / q)) for positive p, q
    c1 = np.max((absm @ q) / p)
    c2 = np.max((absm.T @ p) / q)
    return float(np.sqrt(c1 * c2))


def sparse_norm_bracket(m, tol: float = 1e-6) -> NormBracket:
    """Certified bracket on the operator norm of a sparse matrix.

    The lower end is the Rayleigh-type ratio ||Mx||/||x|| at the Lanczos
    singular vector.  The upper end is a Schur test on the entrywise modulus,
    using the moduli of the singular vectors (plus a tiny floor) as weights.
    """
    m = sp.csr_matrix(m, dtype=complex)
    rows, cols = m.shape
    if m.nnz == 0:
        return NormBracket(0.0, 0.0, tol)
    if max(rows, cols) <= DENSE_SVD_MAX:
        s = op_norm(m.toarray())
        return NormBracket(s, s, tol)
    absm = abs(m).tocsr()
    hermitian = rows == cols and abs(m - m.getH()).max() == 0
    if hermitian:
        op = m.real if not np.any(m.data.imag) else m
        _, vecs = eigsh(op, k=1, which="LM", tol=1e-14)
        x = vecs[:, 0]
        left = right = x
    else:
        dil = sp.bmat([[None, m], [m.getH(), None]]).tocsr()
        if not np.any(dil.data.imag):
            dil = dil.real
        _, vecs = eigsh(dil, k=1, which="LA", tol=1e-14)
        left, right = vecs[:rows, 0], vecs[rows:, 0]
    lower = float(np.linalg.norm(m @ right) / np.linalg.norm(right))
    candidates = []
    for p, q in ((np.abs(left), np.abs(right)), (np.ones(rows), np.ones(cols))):
        p = p + 1e-12 * p.max()
        q = q + 1e-12 * q.max()
        candidates.append(_schur_bound(absm, p, q))
    upper = max(min(candidates), lower)
    return NormBracket(lower, upper, tol)


# ---------------------------------------------------------------- constructors

def psd_sqrt(m) -> np.ndarray:
    """Hermitian PSD square root via eigendecomposition.

    Eigenvalues in [-1e-10, 0) are clamped to zero; anything below -1e-6 raises.
    """
    a = as_cmatrix(m)
    if a.shape[0] != a.shape[1]:
        raise ValueError("psd_sqrt needs a square matrix")
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    if np.max(np.abs(a - dagger(a)), initial=0.0) > HERMITIAN_TOL * scale:
        raise ValueError("psd_sqrt input is not Hermitian")
    w, v = np.linalg.eigh((a + dagger(a)) / 2)
    if w.size and w.min() < -PSD_FAIL:
        raise ValueError(f"psd_sqrt input has eigenvalue {w.min():.3e} < -1e-6")
    w = np.sqrt(np.clip(w, 0.0, None))
    return (v * w) @ dagger(v)


def haar_unitary(dim: int, seed=None) -> np.ndarray:
    """Haar-random unitary from the QR factorisation of a complex Ginibre matrix.

    ``seed`` may be an int, a SeedSequence or a Generator.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def kron(a, b) -> np.ndarray:
    a, b = as_cmatrix(a), as_cmatrix(b)
    _check_cap(a.shape[0] * b.shape[0], a.shape[1] * b.shape[1])
    return np.kron(a, b)


def direct_sum(ms: Sequence) -> np.ndarray:
    blocks = [as_cmatrix(m) for m in ms]
    for b in blocks:
        if b.shape[0] != b.shape[1]:
            raise ValueError("direct_sum blocks must be square")
    n = sum(b.shape[0] for b in blocks)
    _check_cap(n, n)
    return sla.block_diag(*blocks).astype(complex) if blocks else np.zeros((0, 0), complex)


def rank1_projection(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex).ravel()
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ValueError("rank1_projection of the zero vector")
    v = v / nrm
    return np.outer(v, v.conj())


def range_basis(p) -> np.ndarray:
    """Orthonormal basis (columns) of the range of a Hermitian projection."""
    w, v = np.linalg.eigh(as_cmatrix(p))
    return v[:, w > 0.5]


def is_unitary(u, tol: float = 1e-10) -> bool:
    u = as_cmatrix(u)
    return u.shape[0] == u.shape[1] and unitarity_residual(u) <= tol


def unitarity_residual(u) -> float:
    u = as_cmatrix(u)
    eye = np.eye(u.shape[0])
    return max(op_norm(dagger(u) @ u - eye), op_norm(u @ dagger(u) - eye))


def projection_residual(p) -> float:
    p = as_cmatrix(p)
    return max(op_norm(p @ p - p), op_norm(p - dagger(p)))


# ---------------------------------------------------------------- MatTuple

@dataclass(frozen=True)
class MatTuple:
    """Ordered tuple of square complex matrices of one common size."""

    mats: tuple

    def __post_init__(self):
        mats = tuple(as_cmatrix(m) for m in self.mats)
        if mats:
            d = mats[0].shape[0]
            for m in mats:
                if m.shape != (d, d):
                    raise ValueError("MatTuple matrices must be square of equal size")
        object.__setattr__(self, "mats", mats)

    @property
    def dim(self) -> int:
        return self.mats[0].shape[0] if self.mats else 0

    @property
    def count(self) -> int:
        return len(self.mats)

    def __len__(self):
        return len(self.mats)

    def __getitem__(self, i):
        return self.mats[i]

    def __iter__(self):
        return iter(self.mats)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "MatTuple":
        return MatTuple(tuple(fn(m) for m in self.mats))

    def to_json(self) -> dict:
        return {"dim": self.dim, "mats": [matrix_to_json(m) for m in self.mats]}

    @classmethod
    def from_json(cls, obj: dict) -> "MatTuple":
        mt = cls(tuple(matrix_from_json(m) for m in obj["mats"]))
        if mt.mats and mt.dim != obj["dim"]:
            raise ValueError("tuple dim does not match its matrices")
        return mt


def blockwise_sum(models: Sequence[MatTuple]) -> MatTuple:
    """Componentwise direct sum of equally long matrix tuples."""
    counts = {m.count for m in models}
    if len(counts) != 1:
        raise ValueError("models must have the same number of matrices")
    k = counts.pop()
    return MatTuple(tuple(direct_sum([m[i] for m in models]) for i in range(k)))


def matrix_to_json(m) -> dict:
    a = as_cmatrix(m)
    return {
        "dim_rows": a.shape[0],
        "dim_cols": a.shape[1],
        "re": [float(x) for x in a.real.ravel()],
        "im": [float(x) for x in a.imag.ravel()],
    }


def matrix_from_json(obj: dict) -> np.ndarray:
    r, c = int(obj["dim_rows"]), int(obj["dim_cols"])
    re = np.asarray(obj["re"], dtype=float)
    im = np.asarray(obj.get("im", [0.0] * (r * c)), dtype=float)
    if re.size != r * c or im.size != r * c:
        raise ValueError("matrix entry count does not match dims")
    return as_cmatrix((re + 1j * im).reshape(r, c))


# ---------------------------------------------------------------- parallelism

def thread_count() -> int:
    """Worker cap from MF_LAB_THREADS (default 1)."""
    raw = os.environ.get("MF_LAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def task_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for task ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def parallel_map(fn: Callable, items: Iterable) -> list:
    """Order-preserving map, threaded up to MF_LAB_THREADS workers."""
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))
