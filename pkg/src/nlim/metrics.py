"""Error metrics: Frobenius relative/absolute errors and the one-dimensional
empirical Wasserstein p-distance."""

from __future__ import annotations

import numpy as np

from .exceptions import EmptySampleError, ZeroReferenceError


def abs_err(X0, X1) -> float:
    """Frobenius norm of the difference."""
    X0 = np.asarray(X0, dtype=float)
    X1 = np.asarray(X1, dtype=float)
    if X0.shape != X1.shape:
        raise ValueError("shapes differ")
    return float(np.linalg.norm(X0 - X1))


def rel_err(X0, X1) -> float:
    """Frobenius norm of the difference, relative to the reference X0."""
    X0 = np.asarray(X0, dtype=float)
    ref = float(np.linalg.norm(X0))
    if ref == 0.0:
        raise ZeroReferenceError("reference tensor has zero norm")
    return abs_err(X0, X1) / ref


def wasserstein_1d(u, v, p: float = 1.0) -> float:
    """Wasserstein p-distance between two empirical distributions on the line.

    Computed exactly from the quantile functions: both empirical inverse CDFs
    are piecewise constant, so integrating |F_u^{-1} - F_v^{-1}|^p over the
    merged quantile grid is exact for any sample sizes.
    """
    u = np.sort(np.asarray(u, dtype=float).ravel())
    v = np.sort(np.asarray(v, dtype=float).ravel())
    if u.size == 0 or v.size == 0:
        raise EmptySampleError("empty sample")
    if p < 1:
        raise ValueError("order p must be >= 1")
    nu, nv = u.size, v.size
    edges = np.union1d(np.arange(1, nu) / nu, np.arange(1, nv) / nv)
    edges = np.concatenate([edges, [1.0]])
    widths = np.diff(np.concatenate([[0.0], edges]))
    mid = edges - 0.5 * widths
    iu = np.minimum((mid * nu).astype(np.int64), nu - 1)
    iv = np.minimum((mid * nv).astype(np.int64), nv - 1)
    gaps = np.abs(u[iu] - v[iv])
    return float(np.sum(widths * gaps**p) ** (1.0 / p))
