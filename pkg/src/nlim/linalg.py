"""Dense linear-algebra primitives used by the estimators.

Everything here assumes tiny state dimensions (n of order ten at most), so
simplicity wins over asymptotics: Lyapunov equations go through Kronecker
vectorization, condition numbers come from full SVDs, and least squares is
SVD-based with a minimum-norm fallback.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import (
    EmptyFreeSetError,
    FitWarning,
    IndefiniteMatrixError,
    MatrixExpOverflowError,
    NotSymmetricError,
    SingularMatrixError,
    SylvesterError,
)

COND_WARN = 1e8


def require_symmetric(M, rtol=1e-12, label="matrix"):
    M = np.asarray(M, dtype=float)
    scale = np.linalg.norm(M)
    if np.linalg.norm(M - M.T) > rtol * max(scale, 1e-300):
        raise NotSymmetricError(f"{label} is not symmetric to relative tolerance {rtol:g}")
    return M


def spd_sqrt(Q, tol=None):
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues in [-tol, 0) are clipped to zero; anything below -tol raises.
    Default tol is 1e-10 times the spectral norm of Q.
    """
    Q = require_symmetric(Q, label="spd_sqrt input")
    w, V = np.linalg.eigh(0.5 * (Q + Q.T))
    scale = max(abs(w[0]), abs(w[-1]))
    if tol is None:
        tol = 1e-10 * max(scale, 1e-300)
    if w[0] < -tol:
        raise IndefiniteMatrixError("spd_sqrt input", w)
    w = np.clip(w, 0.0, None)
    R = (V * np.sqrt(w)) @ V.T
    return 0.5 * (R + R.T)


def spd_project(M, rel_floor=0.05, label="Q"):
    """Repair policy for estimated stochastic matrices.

    Symmetrizes, then clips slightly negative eigenvalues (with a warning);
    eigenvalues below -rel_floor times the spectral norm indicate a modeling
    failure and raise instead.  Returns (repaired matrix, diagnostics).
    """
    M = np.asarray(M, dtype=float)
    M = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(M)
    scale = max(abs(w[0]), abs(w[-1]), 1e-300)
    info = {"min_eigenvalue": float(w[0]), "clipped": False}
    if w[0] < -rel_floor * scale:
        raise IndefiniteMatrixError(label, w)
    if w[0] < 0.0:
        warnings.warn(
            f"{label}: clipping negative eigenvalues (min {w[0]:.3e}) to zero",
            FitWarning,
            stacklevel=2,
        )
        w = np.clip(w, 0.0, None)
        M = (V * w) @ V.T
        M = 0.5 * (M + M.T)
        info["clipped"] = True
    return M, info


def matrix_exp(A, t=1.0):
    """exp(t * A) by scaling-and-squaring; non-finite results raise."""
    A = np.asarray(A, dtype=float)
    E = scipy.linalg.expm(t * A)
    if not np.all(np.isfinite(E)):
        raise MatrixExpOverflowError(f"matrix exponential overflowed at t={t!r}")
    return E


def exp_integral(Z, t):
    """Integral of exp(-s Z) for s in [0, t], valid for singular Z.

    Computed as the upper-right block of the exponential of the augmented
    matrix [[-Z, I], [0, 0]] scaled by t.
    """
    Z = np.asarray(Z, dtype=float)
    n = Z.shape[0]
    blk = np.zeros((2 * n, 2 * n))
    blk[:n, :n] = -Z
    blk[:n, n:] = np.eye(n)
    E = matrix_exp(blk, t)
    return E[:n, n:]


def lyapunov_solve(F, S):
    """Symmetric X with F X + X F^T = S, by Kronecker vectorization.

    Requires the spectra of F and -F^T to be disjoint (no pair of eigenvalues
    of F sums to zero).
    """
    F = np.asarray(F, dtype=float)
    S = require_symmetric(S, rtol=1e-10, label="lyapunov right-hand side")
    n = F.shape[0]
    lam = np.linalg.eigvals(F)
    sums = lam[:, None] + lam[None, :]
    if np.min(np.abs(sums)) < 1e-12 * max(1.0, np.max(np.abs(lam))):
        raise SylvesterError("eigenvalue condition violated: some lambda_i(F) + lambda_j(F) = 0")
    I = np.eye(n)
    M = np.kron(F, I) + np.kron(I, F)
    X = np.linalg.solve(M, S.reshape(-1)).reshape(n, n)
    return 0.5 * (X + X.T)


def solve_square(A, B, label, cond_max=None):
    """Solve A X = B with condition-number reporting.

    Warns above COND_WARN; raises SingularMatrixError when the condition
    number exceeds cond_max or the factorization fails.
    """
    A = np.asarray(A, dtype=float)
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or (cond_max is not None and cond > cond_max):
        raise SingularMatrixError(label, cond)
    if cond > COND_WARN:
        warnings.warn(f"ill-conditioned solve for {label}: cond={cond:.3e}", FitWarning, stacklevel=2)
    try:
        X = np.linalg.solve(A, B)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(label, cond) from exc
    return X, cond


@dataclass(frozen=True)
class ParamMap:
    """Affine map from reduced parameters to the full parameter vector."""

    matrix: np.ndarray  # (d_full, d_reduced)
    offset: np.ndarray  # (d_full,)

    @property
    def reduced_dim(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def identity(cls, d: int) -> "ParamMap":
        return cls(np.eye(d), np.zeros(d))


@dataclass
class LstsqFit:
    reduced: np.ndarray
    full: np.ndarray
    cond: float
    rank: int
    rank_deficient: bool


def constrained_least_squares(design, targets, pmap: ParamMap) -> LstsqFit:
    """Least squares over the reduced parameters of an affine constraint map.

    Solves min over theta of || design @ (M theta + offset) - targets ||_2
    per right-hand-side column.  Rank deficiency is flagged (minimum-norm
    solution is still returned); an empty reduced space raises.
    """
    design = np.asarray(design, dtype=float)
    targets = np.asarray(targets, dtype=float)
    squeeze = targets.ndim == 1
    if squeeze:
        targets = targets[:, None]
    if pmap.reduced_dim == 0:
        raise EmptyFreeSetError("constraint map leaves no free parameters")
    A = design @ pmap.matrix
    b = targets - (design @ pmap.offset)[:, None]
    if A.shape[0] < pmap.reduced_dim:
        warnings.warn(
            f"underdetermined least squares: {A.shape[0]} rows for {pmap.reduced_dim} parameters",
            FitWarning,
            stacklevel=2,
        )
    reduced, _, rank, svals = np.linalg.lstsq(A, b, rcond=None)
    cond = float(svals[0] / svals[-1]) if svals.size and svals[-1] > 0 else np.inf
    rank_deficient = rank < pmap.reduced_dim
    if rank_deficient:
        warnings.warn("rank-deficient design; returning minimum-norm solution", FitWarning, stacklevel=2)
    if cond > COND_WARN:
        warnings.warn(f"ill-conditioned least squares: cond={cond:.3e}", FitWarning, stacklevel=2)
    full = pmap.matrix @ reduced + pmap.offset[:, None]
    if squeeze:
        reduced = reduced[:, 0]
        full = full[:, 0]
    return LstsqFit(reduced=reduced, full=full, cond=cond, rank=int(rank), rank_deficient=rank_deficient)
