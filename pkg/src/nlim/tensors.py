"""Flattened quadratic tensors and the contraction conventions shared by all fitters.

The quadratic coefficients of an n-dimensional model form a 3-tensor B with
B[i, j, k] = 0 whenever j > k.  It is stored as a dense n-by-n(n+1)/2 matrix
whose row i lists the upper-triangular entries of B[i] in row-major pair order

    (0,0), (0,1), ..., (0,n-1), (1,1), ..., (1,n-1), ..., (n-1,n-1).

Every estimator, serializer and feature map in the package uses this one
column order; :func:`quad_features` produces the matching monomials so that a
drift row is a single inner product.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def upper_pairs(n: int):
    """Index arrays (pj, pk) of the canonical j <= k pair order."""
    pj, pk = np.triu_indices(n)
    pj.setflags(write=False)
    pk.setflags(write=False)
    return pj, pk


def n_pairs(n: int) -> int:
    return n * (n + 1) // 2


@lru_cache(maxsize=None)
def pair_slot(n: int):
    """Matrix mapping an (j, k) index pair (either order) to its column slot."""
    slot = np.empty((n, n), dtype=np.int64)
    pj, pk = upper_pairs(n)
    for p in range(len(pj)):
        slot[pj[p], pk[p]] = p
        slot[pk[p], pj[p]] = p
    slot.setflags(write=False)
    return slot


def quad_features(x):
    """Monomials x_j * x_k for j <= k, in the canonical column order.

    Works on a single state vector or on any array whose last axis is the
    state dimension.
    """
    x = np.asarray(x, dtype=float)
    pj, pk = upper_pairs(x.shape[-1])
    return x[..., pj] * x[..., pk]


def sym(X):
    """X plus X with its first two axes swapped (not halved)."""
    X = np.asarray(X, dtype=float)
    if X.ndim < 2:
        raise ValueError("sym needs at least two axes")
    return X + np.swapaxes(X, 0, 1)


@dataclass(frozen=True, eq=False)
class QuadTensor:
    """Quadratic coefficients in the flattened upper-triangular layout."""

    n: int
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.shape != (self.n, n_pairs(self.n)):
            raise ValueError(
                f"QuadTensor data must have shape ({self.n}, {n_pairs(self.n)}), got {data.shape}"
            )
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def zeros(cls, n: int) -> "QuadTensor":
        return cls(n, np.zeros((n, n_pairs(n))))

    @classmethod
    def unflatten(cls, n: int, flat) -> "QuadTensor":
        return cls(n, np.asarray(flat, dtype=float).reshape(n, n_pairs(n)))

    def flatten(self) -> np.ndarray:
        return self.data.copy()

    @classmethod
    def from_full(cls, full) -> "QuadTensor":
        """Adopt an (n, n, n) tensor whose lower triangle (j > k) is zero."""
        full = np.asarray(full, dtype=float)
        n = full.shape[0]
        if full.shape != (n, n, n):
            raise ValueError("full tensor must be cubic")
        tj, tk = np.tril_indices(n, k=-1)
        if np.any(full[:, tj, tk] != 0.0):
            raise ValueError("lower triangle (j > k) must be exactly zero")
        pj, pk = upper_pairs(n)
        return cls(n, full[:, pj, pk])

    def to_full(self) -> np.ndarray:
        full = np.zeros((self.n, self.n, self.n))
        pj, pk = upper_pairs(self.n)
        full[:, pj, pk] = self.data
        return full

    @classmethod
    def from_symmetric(cls, coeffs) -> "QuadTensor":
        """Adopt coefficients symmetric in the last two indices.

        The represented quadratic form is preserved: off-diagonal pairs are
        folded into the single upper-triangular slot (doubled), diagonals kept.
        """
        coeffs = np.asarray(coeffs, dtype=float)
        n = coeffs.shape[0]
        if not np.allclose(coeffs, coeffs.transpose(0, 2, 1), rtol=0, atol=0):
            raise ValueError("coefficients must be exactly symmetric in the last two indices")
        pj, pk = upper_pairs(n)
        scale = np.where(pj == pk, 1.0, 2.0)
        return cls(n, coeffs[:, pj, pk] * scale)

    def to_symmetric(self) -> np.ndarray:
        """Equivalent coefficients symmetric in the last two indices."""
        out = np.zeros((self.n, self.n, self.n))
        pj, pk = upper_pairs(self.n)
        half = np.where(pj == pk, 1.0, 0.5) * self.data
        out[:, pj, pk] = half
        out[:, pk, pj] = half
        return out

    def permuted(self, perm) -> "QuadTensor":
        """Coefficients after relabeling state coordinate i as perm[i]."""
        perm = np.asarray(perm, dtype=int)
        inv = np.argsort(perm)
        coeffs = self.to_symmetric()[np.ix_(inv, inv, inv)]
        return QuadTensor.from_symmetric(coeffs)

    def contract(self, T) -> np.ndarray:
        return contract_pair(self, T)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))


def contract_pair(B: QuadTensor, T) -> np.ndarray:
    """Contract B's quadratic index pair with the first two indices of T.

    [B x2 T]_{i...} = sum_{j<=k} B[i,(j,k)] * T[j,k,...]; only the stored
    upper-triangular entries participate, the implicit zero lower triangle is
    never touched.
    """
    T = np.asarray(T, dtype=float)
    if T.ndim < 2 or T.shape[0] != B.n or T.shape[1] != B.n:
        raise ValueError(f"tensor with leading shape ({B.n}, {B.n}, ...) required, got {T.shape}")
    pj, pk = upper_pairs(B.n)
    return np.tensordot(B.data, T[pj, pk, ...], axes=(1, 0))


def contract_last_pair(T, B: QuadTensor) -> np.ndarray:
    """Contract the trailing index pair of T with B's quadratic pair.

    [T x2 B]_{...j} = sum_{k<=l} T[..., k, l] * B[j,(k,l)].  B's first index
    becomes the trailing output index.
    """
    T = np.asarray(T, dtype=float)
    if T.ndim < 2 or T.shape[-1] != B.n or T.shape[-2] != B.n:
        raise ValueError(f"tensor with trailing shape (..., {B.n}, {B.n}) required, got {T.shape}")
    pj, pk = upper_pairs(B.n)
    return T[..., pj, pk] @ B.data.T


def quad_drift(Bdata, A, C, x):
    """B . quad_features(x) + A x + C, vectorized over leading axes of x."""
    x = np.asarray(x, dtype=float)
    return quad_features(x) @ np.asarray(Bdata).T + x @ np.asarray(A).T + np.asarray(C)
