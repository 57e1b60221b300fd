"""Dense symmetric-matrix numerics used throughout the package.

Everything operates on :class:`SymMatrix`, a thin immutable carrier around a
numpy array whose symmetry is enforced at construction.  All functions are
pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NumericalFailure(RuntimeError):
    """An iterative numerical routine failed to converge."""


class DegenerateSpectrumError(ValueError):
    """All eigenvalues are non-positive; no invertible subspace exists."""


@dataclass(frozen=True)
class SymMatrix:
    """Real symmetric matrix with its dimension as metadata.

    The stored array is symmetrized exactly (``(a + a.T) / 2``) and write
    protected, so ``m.a[i, j] == m.a[j, i]`` holds bit-for-bit.
    """

    a: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.a, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("dimension must be >= 1")
        if not np.all(np.isfinite(arr)):
            raise NumericalFailure("non-finite entries in symmetric matrix")
        arr = (arr + arr.T) / 2.0
        arr.setflags(write=False)
        object.__setattr__(self, "a", arr)

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    @classmethod
    def identity(cls, d: int) -> "SymMatrix":
        return cls(np.eye(d))

    @classmethod
    def diagonal(cls, entries) -> "SymMatrix":
        return cls(np.diag(np.asarray(entries, dtype=float)))

    @classmethod
    def zeros(cls, d: int) -> "SymMatrix":
        return cls(np.zeros((d, d)))


@dataclass(frozen=True)
class EigenDecomp:
    """Spectral decomposition with eigenvalues sorted descending.

    Column ``k`` of ``vectors`` pairs with ``values[k]``.
    """

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.T


def eigh(m: SymMatrix) -> EigenDecomp:
    """Full spectral decomposition of a symmetric matrix.

    Raises :class:`NumericalFailure` if the underlying iteration does not
    converge (never silently).
    """
    try:
        vals, vecs = np.linalg.eigh(m.a)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc
    order = np.argsort(vals)[::-1]
    return EigenDecomp(values=vals[order], vectors=vecs[:, order])


def truncated_pinv(m: SymMatrix, rel_cutoff: float = 1e-3) -> tuple[SymMatrix, int]:
    """Pseudo-inverse restricted to the dominant eigensubspace.

    Eigenvalues strictly smaller than ``rel_cutoff * lambda_max`` are cut;
    ties at exactly the cutoff are retained.  Returns the inverse on the
    retained subspace together with the retained rank.
    """
    if not 0.0 < rel_cutoff < 1.0:
        raise ValueError(f"rel_cutoff must lie in (0, 1), got {rel_cutoff}")
    dec = eigh(m)
    lam_max = dec.values[0]
    if lam_max <= 0.0:
        raise DegenerateSpectrumError("no positive eigenvalue to invert against")
    keep = dec.values >= rel_cutoff * lam_max
    rank = int(np.count_nonzero(keep))
    inv_vals = np.where(keep, 1.0 / np.where(keep, dec.values, 1.0), 0.0)
    pinv = (dec.vectors * inv_vals) @ dec.vectors.T
    return SymMatrix(pinv), rank


def frobenius_dist_sq(a: SymMatrix, b: SymMatrix) -> float:
    """Squared Frobenius distance ``sum_ij (a_ij - b_ij)^2``."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    diff = a.a - b.a
    return float(np.sum(diff * diff))


def frobenius_norm(m: SymMatrix) -> float:
    return float(np.linalg.norm(m.a, "fro"))


def trace(m: SymMatrix) -> float:
    return float(np.trace(m.a))


def matmul(a: SymMatrix, b: SymMatrix) -> np.ndarray:
    """Matrix product; not symmetric in general, hence a plain array."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return a.a @ b.a


def quadform(m: SymMatrix, v: np.ndarray) -> float:
    """Quadratic form ``v' m v``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (m.dim,):
        raise ValueError(f"vector of length {m.dim} expected, got shape {v.shape}")
    return float(v @ m.a @ v)
