"""Lagged non-central moment tensors and their forward-difference derivatives.

For a uniformly sampled series x(t) the estimators average over every
available pair, so at lag k*dt a tensor uses N-k terms and divisor N-k
(N = sample count).  No mean is removed: the quadratic fitters need raw
moments, and the linear fitters verify near-zero mean themselves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InsufficientLagsError, TooShortError, UnstableDynamicsError
from .linalg import exp_integral, lyapunov_solve, matrix_exp
from .simulate import Trajectory

_CHUNK = 1 << 17


@dataclass(frozen=True)
class MomentSet:
    """First moment E and lagged moment tensors K, M, S on a lag grid.

    K[k][i, j]       = < x_i(t + k dt) x_j(t) >
    M[k][i, j, l]    = < x_i(t + k dt) x_j(t) x_l(t) >
    S[k][i, j, l, w] = < x_i(t + k dt) x_j(t) x_l(t) x_w(t) >

    M is symmetric in its trailing two indices, S in its trailing three, and
    the lag-0 tensors are fully symmetric.
    """

    n: int
    dt: float
    E: np.ndarray
    K: np.ndarray  # (L+1, n, n)
    M: np.ndarray  # (L+1, n, n, n)
    S: np.ndarray  # (L_S+1, n, n, n, n)

    def __post_init__(self):
        n = self.n
        object.__setattr__(self, "E", np.asarray(self.E, dtype=float))
        object.__setattr__(self, "K", np.asarray(self.K, dtype=float))
        object.__setattr__(self, "M", np.asarray(self.M, dtype=float))
        object.__setattr__(self, "S", np.asarray(self.S, dtype=float))
        if self.E.shape != (n,) or self.K.shape[1:] != (n, n):
            raise ValueError("inconsistent moment shapes")
        if self.M.shape[1:] != (n, n, n) or self.S.shape[1:] != (n, n, n, n):
            raise ValueError("inconsistent moment shapes")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def max_lag(self) -> int:
        return self.K.shape[0] - 1

    @property
    def max_lag_s(self) -> int:
        return self.S.shape[0] - 1

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "n": self.n,
            "dt": self.dt,
            "max_lag": self.max_lag,
            "max_lag_s": self.max_lag_s,
            "E": self.E.tolist(),
            "K": self.K.tolist(),
            "M": self.M.tolist(),
            "S": self.S.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MomentSet":
        return cls(
            n=int(d["n"]),
            dt=float(d["dt"]),
            E=np.array(d["E"], dtype=float),
            K=np.array(d["K"], dtype=float),
            M=np.array(d["M"], dtype=float),
            S=np.array(d["S"], dtype=float),
        )


@dataclass(frozen=True)
class DerivativeSet:
    """Lag-derivatives of the moment tensors at lag 0 (forward differences)."""

    K1: np.ndarray
    K2: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    S1: np.ndarray
    scheme: str = "forward-1"


def _sym_trailing(X: np.ndarray, full: bool = False) -> np.ndarray:
    """Average over permutations of the trailing indices (all indices at lag 0,
    where every slot refers to the same time).  The raw estimates agree only up
    to floating-point summation order, so the permuted copies are sorted before
    reduction, which pins the symmetry bit-exactly."""
    from itertools import permutations

    axes = range(X.ndim) if full else range(1, X.ndim)
    head = () if full else (0,)
    perms = [head + tuple(p) for p in permutations(axes)]
    stacked = np.stack([X.transpose(p) for p in perms], axis=0)
    stacked.sort(axis=0)
    return stacked.sum(axis=0) / len(perms)


def estimate_moments(data: Trajectory, max_lag: int = 2, max_lag_s: int = 1) -> MomentSet:
    """Sample E, K, M, S from a trajectory up to the requested lags."""
    x = np.asarray(data.values, dtype=float)
    N, n = x.shape
    if max_lag_s > max_lag:
        raise ValueError("max_lag_s cannot exceed max_lag")
    if N <= max_lag + 1:
        raise TooShortError(f"{N} samples cannot support lag {max_lag}")

    E = x.mean(axis=0)
    K = np.empty((max_lag + 1, n, n))
    M = np.empty((max_lag + 1, n, n, n))
    S = np.empty((max_lag_s + 1, n, n, n, n))
    for k in range(max_lag + 1):
        lead = x[k:]
        base = x[: N - k]
        cnt = N - k
        K[k] = lead.T @ base / cnt
        acc_m = np.zeros((n, n, n))
        acc_s = np.zeros((n, n, n, n)) if k <= max_lag_s else None
        for lo in range(0, cnt, _CHUNK):
            hi = min(lo + _CHUNK, cnt)
            lc = lead[lo:hi]
            bc = base[lo:hi]
            acc_m += np.einsum("ti,tj,tk->ijk", lc, bc, bc, optimize=True)
            if acc_s is not None:
                acc_s += np.einsum("ti,tj,tk,tw->ijkw", lc, bc, bc, bc, optimize=True)
        M[k] = _sym_trailing(acc_m / cnt, full=(k == 0))
        if acc_s is not None:
            S[k] = _sym_trailing(acc_s / cnt, full=(k == 0))
    K[0] = 0.5 * (K[0] + K[0].T)
    return MomentSet(n=n, dt=data.dt_out, E=E, K=K, M=M, S=S)


def forward_derivatives(m: MomentSet, order: int = 1) -> DerivativeSet:
    """Finite forward differences of K, M (to second order) and S (first).

    order=1 is the default scheme: X'(0) = (X(dt) - X(0)) / dt and
    X''(0) = (X(2dt) - 2 X(dt) + X(0)) / dt^2.  order=2 uses the
    second-order one-sided stencils and needs one extra lag of each tensor.
    """
    dt = m.dt
    if order == 1:
        if m.max_lag < 2 or m.max_lag_s < 1:
            raise InsufficientLagsError("need K, M lags through 2*dt and S through dt")
        d1 = lambda X: (X[1] - X[0]) / dt
        d2 = lambda X: (X[2] - 2.0 * X[1] + X[0]) / dt**2
        return DerivativeSet(
            K1=d1(m.K), K2=d2(m.K), M1=d1(m.M), M2=d2(m.M), S1=d1(m.S), scheme="forward-1"
        )
    if order == 2:
        if m.max_lag < 3 or m.max_lag_s < 2:
            raise InsufficientLagsError("second-order scheme needs K, M lags through 3*dt and S through 2*dt")
        d1 = lambda X: (-3.0 * X[0] + 4.0 * X[1] - X[2]) / (2.0 * dt)
        d2 = lambda X: (2.0 * X[0] - 5.0 * X[1] + 4.0 * X[2] - X[3]) / dt**2
        return DerivativeSet(
            K1=d1(m.K), K2=d2(m.K), M1=d1(m.M), M2=d2(m.M), S1=d1(m.S), scheme="forward-2"
        )
    raise ValueError("order must be 1 or 2")


def _isserlis_s(Ktau: np.ndarray, K0: np.ndarray) -> np.ndarray:
    """Gaussian fourth moment: pair the lead index with each trailing one."""
    return (
        np.einsum("ij,kw->ijkw", Ktau, K0)
        + np.einsum("ik,jw->ijkw", Ktau, K0)
        + np.einsum("iw,jk->ijkw", Ktau, K0)
    )


def _require_stable(A: np.ndarray):
    if np.max(np.linalg.eigvals(A).real) >= 0:
        raise UnstableDynamicsError("dynamics matrix must have all eigenvalues in the left half plane")


def _colored_k0(A: np.ndarray, Q: np.ndarray, gamma: float) -> np.ndarray:
    """Exact stationary covariance of the linear colored system.

    Solved from the joint (state, noise) Lyapunov equation; the noise block
    recovers 1/(2 gamma) I and the cross block sqrt(Q/2) B^T.
    """
    from .linalg import spd_sqrt

    n = A.shape[0]
    S2Q = spd_sqrt(2.0 * Q)
    F = np.zeros((2 * n, 2 * n))
    F[:n, :n] = A
    F[:n, n:] = S2Q
    F[n:, n:] = -np.eye(n) / gamma
    D = np.zeros((2 * n, 2 * n))
    D[n:, n:] = np.eye(n) / gamma**2
    Sigma = lyapunov_solve(F, -D)
    return Sigma[:n, :n]


def gaussian_moment_oracle(
    A, Q, dt: float, max_lag: int, max_lag_s: int | None = None, gamma: float | None = None
) -> MomentSet:
    """Exact moments of a zero-mean linear model, as a test oracle.

    White noise: K(0) from the Lyapunov balance, K(tau) = exp(tau A) K(0).
    Colored noise (gamma given): K(0) from the joint Lyapunov equation and
    the lagged law K(tau) = exp(tau A) [K(0) + int_0^tau exp(-s(A + I/gamma)) ds Q B^T].
    Odd moments vanish; S follows from the Gaussian pairing identity.
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    _require_stable(A)
    n = A.shape[0]
    if max_lag_s is None:
        max_lag_s = max_lag
    if gamma is None:
        K0 = lyapunov_solve(A, -2.0 * Q)
        K = np.array([matrix_exp(A, k * dt) @ K0 for k in range(max_lag + 1)])
    else:
        K0 = _colored_k0(A, Q, gamma)
        Bm = np.linalg.inv(np.eye(n) - gamma * A)
        QBt = Q @ Bm.T
        Z = A + np.eye(n) / gamma
        K = np.array(
            [
                matrix_exp(A, k * dt) @ (K0 + exp_integral(Z, k * dt) @ QBt)
                for k in range(max_lag + 1)
            ]
        )
    M = np.zeros((max_lag + 1, n, n, n))
    S = np.array([_isserlis_s(K[k], K0) for k in range(max_lag_s + 1)])
    return MomentSet(n=n, dt=dt, E=np.zeros(n), K=K, M=M, S=S)


def analytic_derivatives(A, Q, gamma: float | None = None) -> DerivativeSet:
    """Exact lag-0 derivatives of the Gaussian oracle moments (no
    finite-difference bias); companion to :func:`gaussian_moment_oracle`."""
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    _require_stable(A)
    n = A.shape[0]
    if gamma is None:
        K0 = lyapunov_solve(A, -2.0 * Q)
        K1 = A @ K0
        K2 = A @ K1
    else:
        K0 = _colored_k0(A, Q, gamma)
        Bm = np.linalg.inv(np.eye(n) - gamma * A)
        QBt = Q @ Bm.T
        K1 = A @ K0 + QBt
        K2 = A @ K1 - QBt / gamma
    S1 = _isserlis_s(K1, K0)
    return DerivativeSet(
        K1=K1, K2=K2, M1=np.zeros((n, n, n)), M2=np.zeros((n, n, n)), S1=S1, scheme="analytic"
    )
