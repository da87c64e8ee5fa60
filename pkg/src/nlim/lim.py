"""Linear inverse models under white or OU colored noise.

White fit: the first lag-derivative of the observed correlation fixes the
dynamics, A = K'(0) K(0)^{-1}, and the stationarity balance
0 = Sym(A K(0) + Q) fixes the forcing.  Colored fit: the second derivative
relation A = [K''(0) + K'(0)/gamma] [K'(0) + K(0)/gamma]^{-1} (independent
of Q) fixes the dynamics, and Q solves the colored balance
0 = Sym(A K(0) + Q B^T) with B = (I - gamma A)^{-1}, a Lyapunov equation in Q.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import AllFitsFailedError, FitWarning, InsufficientLagsError, NlimError
from .linalg import exp_integral, lyapunov_solve, matrix_exp, solve_square, spd_project
from .models import LinModel, NoiseSpec
from .moments import DerivativeSet, MomentSet
from .tensors import sym


def _mean_check(m: MomentSet):
    scale = np.sqrt(np.trace(m.K[0]))
    if np.linalg.norm(m.E) > 0.01 * scale:
        warnings.warn(
            "data mean is not negligible; linear fits assume centered data",
            FitWarning,
            stacklevel=3,
        )


def _dissipativity(A: np.ndarray) -> bool:
    stable = bool(np.all(np.linalg.eigvals(A).real < 0))
    if not stable:
        warnings.warn("fitted dynamics matrix is not dissipative", FitWarning, stacklevel=3)
    return stable


def white_lim_fit(m: MomentSet, d: DerivativeSet) -> LinModel:
    """Fit the white-noise linear model from K(0) and K'(0)."""
    _mean_check(m)
    K0 = m.K[0]
    At, cond = solve_square(K0, d.K1.T, label="K(0)", cond_max=1e10)
    A = At.T
    Q_raw = -0.5 * sym(A @ K0)
    Q, spd_info = spd_project(Q_raw, label="white-LIM Q")
    info = {
        "condition": cond,
        "fdr_residual": float(np.linalg.norm(sym(A @ K0 + Q_raw))),
        "dissipative": _dissipativity(A),
        **{f"q_{k}": v for k, v in spd_info.items()},
    }
    return LinModel(A=A, Q=Q, noise=NoiseSpec.white(), info=info)


def colored_lim_fit(m: MomentSet, d: DerivativeSet, gamma: float) -> LinModel:
    """Fit the colored-noise linear model at a prescribed correlation time."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    _mean_check(m)
    K0 = m.K[0]
    g1 = 1.0 / gamma
    reg = d.K1 + g1 * K0
    tgt = d.K2 + g1 * d.K1
    At, cond = solve_square(reg.T, tgt.T, label="colored regressor K'(0) + K(0)/gamma", cond_max=1e12)
    A = At.T
    n = m.n
    Bm, cond_b = solve_square(np.eye(n) - gamma * A, np.eye(n), label="I - gamma A", cond_max=1e12)
    Q_raw = lyapunov_solve(Bm, -sym(A @ K0))
    Q, spd_info = spd_project(Q_raw, label="colored-LIM Q")
    info = {
        "condition": cond,
        "condition_b_matrix": cond_b,
        "fdr_residual": float(np.linalg.norm(sym(A @ K0 + Q_raw @ Bm.T))),
        "dissipative": _dissipativity(A),
        **{f"q_{k}": v for k, v in spd_info.items()},
    }
    return LinModel(A=A, Q=Q, noise=NoiseSpec.colored(gamma), info=info)


def reconstruct_K(model: LinModel, K0, taus) -> np.ndarray:
    """Model-implied lagged correlation matrices at nonnegative lags.

    White noise: K(tau) = exp(tau A) K0.  Colored noise adds the memory term
    exp(tau A) [int_0^tau exp(-s(A + I/gamma)) ds] Q B^T.
    """
    K0 = np.asarray(K0, dtype=float)
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if np.any(taus < 0):
        raise ValueError("lags must be nonnegative")
    A = model.A
    n = model.n
    if model.noise.is_colored:
        gamma = model.noise.gamma
        Bm = np.linalg.inv(np.eye(n) - gamma * A)
        QBt = model.Q @ Bm.T
        Z = A + np.eye(n) / gamma
        out = [matrix_exp(A, t) @ (K0 + exp_integral(Z, t) @ QBt) for t in taus]
    else:
        out = [matrix_exp(A, t) @ K0 for t in taus]
    return np.array(out)


@dataclass
class GammaScan:
    """Noise-correlation-time selection trace: the objective over the grid."""

    grid: np.ndarray
    objective: np.ndarray
    best: float
    best_index: int
    errors: dict

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "objective": [None if not np.isfinite(v) else float(v) for v in self.objective],
            "best": float(self.best),
            "best_index": int(self.best_index),
            "errors": {str(k): v for k, v in self.errors.items()},
        }


def default_gamma_grid(lo: float = 0.01, hi: float = 2.0, k: int = 40) -> np.ndarray:
    return np.geomspace(lo, hi, k)


def gamma_select(m: MomentSet, d: DerivativeSet, grid, window: float) -> GammaScan:
    """Pick gamma minimizing the correlation misfit over lags [0, window].

    The objective is the discretized L2-in-lag norm of the Frobenius mismatch
    between the fitted model's correlation and the observed one; ties and the
    argmin both resolve to the smallest grid value.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("gamma grid is empty")
    if np.any(np.diff(grid) <= 0) or np.any(grid <= 0):
        raise ValueError("gamma grid must be positive and strictly increasing")
    n_lag = int(np.floor(window / m.dt + 1e-9))
    if n_lag > m.max_lag:
        raise InsufficientLagsError(
            f"window {window} needs lags through {n_lag}, moment set has {m.max_lag}"
        )
    taus = np.arange(n_lag + 1) * m.dt
    K_obs = m.K[: n_lag + 1]
    objective = np.full(grid.shape, np.inf)
    errors = {}
    for idx, gamma in enumerate(grid):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", FitWarning)
                model = colored_lim_fit(m, d, gamma)
            K_fit = reconstruct_K(model, m.K[0], taus)
            diff = K_fit - K_obs
            objective[idx] = float(np.sqrt(np.sum(diff**2) * m.dt))
        except NlimError as exc:
            errors[float(gamma)] = f"{type(exc).__name__}: {exc}"
    if not np.any(np.isfinite(objective)):
        raise AllFitsFailedError("every gamma grid point failed to fit")
    best_index = int(np.argmin(objective))
    return GammaScan(
        grid=grid,
        objective=objective,
        best=float(grid[best_index]),
        best_index=best_index,
        errors=errors,
    )
