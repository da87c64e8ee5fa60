"""Quadratic inverse models: moment-equation assembly, closed-form stochastic
matrix, and the simulation-in-the-loop refinement for colored noise.

Stationarity ties the unknowns (B, A, C) to the observed moments through one
mean equation, n first-derivative equations for K and n(n+1)/2 for M: a
square linear system per output coordinate, shared across coordinates.  For
colored noise the unknown noise-state cross moments are eliminated exactly by
adding 1/gamma times each first-derivative equation to the corresponding
second-derivative equation, which leaves (B, A, C) independent of Q.  Q then
follows in closed form from the stationarity of <eta_i x_j>, and can be
refined by minimizing a simulated-moment mismatch under common random numbers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .exceptions import (
    EmptyFreeSetError,
    FitWarning,
    IndefiniteMatrixError,
    NonFiniteStateError,
    RankDeficientMapError,
)
from .linalg import COND_WARN, ParamMap, constrained_least_squares, spd_project, spd_sqrt
from .models import NoiseSpec, QuadModel
from .moments import DerivativeSet, MomentSet
from .simulate import ChainConfig, FrozenNoise, WallSpec, _chain_noise, stationary_moments
from .tensors import QuadTensor, contract_last_pair, contract_pair, n_pairs, sym, upper_pairs

FREE = "free"
ZERO = "zero"
FIXED = "fixed"
TIED = "tied"


@dataclass(frozen=True)
class Marker:
    """Per-entry estimation marker: free / zero / fixed(value) / tied(group, sign)."""

    kind: str
    value: float = 0.0
    group: str = ""
    sign: int = 1

    def __post_init__(self):
        if self.kind not in (FREE, ZERO, FIXED, TIED):
            raise ValueError(f"unknown marker kind {self.kind!r}")
        if self.kind == TIED and (not self.group or self.sign not in (1, -1)):
            raise ValueError("tied marker needs a group id and sign +/-1")


@dataclass
class ConstraintSpec:
    """Structural constraints on (B, A, C) for restricted estimation.

    Entries default to `default` (free unless stated); overrides are keyed by
    ("B", i, j, k) with j <= k, ("A", i, j) or ("C", i).
    """

    n: int
    entries: dict = field(default_factory=dict)
    default: str = FREE

    def marker(self, key) -> Marker:
        mk = self.entries.get(key)
        if mk is None:
            return Marker(self.default)
        return mk

    def set_b(self, i, j, k, marker: Marker):
        if j > k:
            j, k = k, j
        self.entries[("B", i, j, k)] = marker

    def set_a(self, i, j, marker: Marker):
        self.entries[("A", i, j)] = marker

    def set_c(self, i, marker: Marker):
        self.entries[("C", i)] = marker

    def to_dict(self) -> dict:
        items = []
        for key, mk in sorted(self.entries.items(), key=lambda kv: repr(kv[0])):
            item = {"target": key[0], "index": list(key[1:]), "type": mk.kind}
            if mk.kind == FIXED:
                item["value"] = mk.value
            if mk.kind == TIED:
                item["group"] = mk.group
                item["sign"] = mk.sign
            items.append(item)
        return {"n": self.n, "default": self.default, "entries": items}

    @classmethod
    def from_dict(cls, d: dict) -> "ConstraintSpec":
        spec = cls(n=int(d["n"]), default=d.get("default", FREE))
        for item in d.get("entries", []):
            mk = Marker(
                kind=item["type"],
                value=float(item.get("value", 0.0)),
                group=item.get("group", ""),
                sign=int(item.get("sign", 1)),
            )
            key = (item["target"], *[int(v) for v in item["index"]])
            if item["target"] == "B":
                spec.set_b(key[1], key[2], key[3], mk)
            elif item["target"] == "A":
                spec.set_a(key[1], key[2], mk)
            elif item["target"] == "C":
                spec.set_c(key[1], mk)
            else:
                raise ValueError(f"unknown constraint target {item['target']!r}")
        return spec


def _param_keys(n: int):
    """Full parameter layout: per output i, B-pairs then A row then C entry."""
    pj, pk = upper_pairs(n)
    keys = []
    for i in range(n):
        keys.extend(("B", i, int(pj[p]), int(pk[p])) for p in range(len(pj)))
        keys.extend(("A", i, j) for j in range(n))
        keys.append(("C", i))
    return keys


def apply_constraints(spec: ConstraintSpec, n: int) -> ParamMap:
    """Build the affine map full-theta = M theta_reduced + offset.

    Free entries get their own reduced coordinate, tied groups share one with
    the marker's sign, fixed values go to the offset.  Tied groups need at
    least two members and the map must have full column rank.
    """
    if spec.n != n:
        raise ValueError("constraint spec dimension mismatch")
    keys = _param_keys(n)
    d_full = len(keys)
    columns = []
    offset = np.zeros(d_full)
    group_col = {}
    group_size = {}
    cols = []
    for row, key in enumerate(keys):
        mk = spec.marker(key)
        if mk.kind == ZERO:
            continue
        if mk.kind == FIXED:
            offset[row] = mk.value
            continue
        if mk.kind == FREE:
            col = len(columns)
            columns.append([])
            cols.append((row, col, 1.0))
            continue
        if mk.group not in group_col:
            group_col[mk.group] = len(columns)
            columns.append([])
            group_size[mk.group] = 0
        group_size[mk.group] += 1
        cols.append((row, group_col[mk.group], float(mk.sign)))
    for group, size in group_size.items():
        if size < 2:
            raise ValueError(f"tied group {group!r} has fewer than two members")
    d_red = len(columns)
    if d_red == 0:
        raise EmptyFreeSetError("all parameters are fixed or zero")
    M = np.zeros((d_full, d_red))
    for row, col, s in cols:
        M[row, col] = s
    if np.linalg.matrix_rank(M) < d_red:
        raise RankDeficientMapError("constraint map does not have full column rank")
    return ParamMap(matrix=M, offset=offset)


def assemble_white_system(m: MomentSet, d: DerivativeSet):
    """Design matrix and targets of the white-noise moment equations.

    Row blocks: (a) the stationary mean; (b) per coordinate q, the K'(0)
    equation; (c) per pair q <= r, the M'(0) equation.  One shared design for
    all output rows; column order matches the flattened (B, A, C) layout.
    """
    n = m.n
    P = n_pairs(n)
    pj, pk = upper_pairs(n)
    dim = 1 + n + P
    K0, M0, S0, E = m.K[0], m.M[0], m.S[0], m.E

    D = np.zeros((dim, dim))
    T = np.zeros((dim, n))
    D[0, :P] = K0[pj, pk]
    D[0, P : P + n] = E
    D[0, -1] = 1.0
    D[1 : 1 + n, :P] = M0[pj, pk, :].T
    D[1 : 1 + n, P : P + n] = K0.T
    D[1 : 1 + n, -1] = E
    D[1 + n :, :P] = S0[pj, pk][:, pj, pk].T
    D[1 + n :, P : P + n] = M0[:, pj, pk].T
    D[1 + n :, -1] = K0[pj, pk]

    T[1 : 1 + n, :] = d.K1.T
    T[1 + n :, :] = d.M1[:, pj, pk].T
    return D, T


def assemble_colored_system(m: MomentSet, d: DerivativeSet, gamma: float):
    """Design matrix and targets of the colored-noise moment equations.

    The noise cross-moment terms cancel exactly between the 1/gamma-scaled
    first-derivative equations and the second-derivative equations, so the
    system determines (B, A, C) without Q.  Symmetrization of the derivative
    tensors swaps their two leading indices.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    n = m.n
    P = n_pairs(n)
    pj, pk = upper_pairs(n)
    dim = 1 + n + P
    g1 = 1.0 / gamma
    K0, M0, S0, E = m.K[0], m.M[0], m.S[0], m.E

    M1s = d.M1 + d.M1.transpose(1, 0, 2)
    S1s = d.S1 + d.S1.transpose(1, 0, 2, 3)

    D = np.zeros((dim, dim))
    T = np.zeros((dim, n))
    D[0, :P] = K0[pj, pk]
    D[0, P : P + n] = E
    D[0, -1] = 1.0
    Fb = M1s + g1 * M0
    D[1 : 1 + n, :P] = Fb[pj, pk, :].T
    D[1 : 1 + n, P : P + n] = (d.K1 + g1 * K0).T
    D[1 : 1 + n, -1] = g1 * E
    Fc = S1s + g1 * S0
    D[1 + n :, :P] = Fc[pj, pk][:, pj, pk].T
    D[1 + n :, P : P + n] = (d.M1 + g1 * M0)[:, pj, pk].T
    D[1 + n :, -1] = g1 * K0[pj, pk]

    T[1 : 1 + n, :] = (d.K2 + g1 * d.K1).T
    T[1 + n :, :] = (d.M2 + g1 * d.M1)[:, pj, pk].T
    return D, T


def _solve_dynamics(D, T, n, constraints):
    """Solve the assembled square system for (B, A, C), with optional
    structural constraints turning it into a stacked least-squares problem."""
    P = n_pairs(n)
    dim = D.shape[0]
    if constraints is None:
        cond = float(np.linalg.cond(D))
        if not np.isfinite(cond):
            from .exceptions import SingularMatrixError

            raise SingularMatrixError("moment-equation design", cond)
        if cond > COND_WARN:
            warnings.warn(
                f"ill-conditioned design (cond={cond:.3e}); falling back to least squares",
                FitWarning,
                stacklevel=3,
            )
            theta, _, _, _ = np.linalg.lstsq(D, T, rcond=None)
        else:
            theta = np.linalg.solve(D, T)
        theta_rows = theta.T  # row i -> parameters of output i
        rank_deficient = False
    else:
        pmap = apply_constraints(constraints, n)
        A_full = np.kron(np.eye(n), D)
        t_full = T.T.reshape(-1)
        fit = constrained_least_squares(A_full, t_full, pmap)
        theta_rows = fit.full.reshape(n, dim)
        cond = fit.cond
        rank_deficient = fit.rank_deficient

    B = QuadTensor(n, theta_rows[:, :P])
    A = theta_rows[:, P : P + n].copy()
    C = theta_rows[:, -1].copy()

    resid = D @ theta_rows.T - T
    residuals = {
        "mean": float(np.linalg.norm(resid[0])),
        "k_equations": float(np.linalg.norm(resid[1 : 1 + n])),
        "m_equations": float(np.linalg.norm(resid[1 + n :])),
    }
    return B, A, C, cond, residuals, rank_deficient


@dataclass
class ColoredDiagnostics:
    """Noise-state cross moments and intermediates of the colored Q estimate."""

    K_eta_x: np.ndarray | None
    M_eta_x: np.ndarray | None
    G: np.ndarray
    H: np.ndarray
    wall_activity: float | None
    objective_trace: list


@dataclass
class FitReport:
    """Fitted model plus solver diagnostics."""

    model: QuadModel
    condition: float
    residuals: dict
    moment_match: dict | None = None
    diagnostics: ColoredDiagnostics | None = None
    q_minimized: bool = False
    optimizer: dict | None = None
    rank_deficient: bool = False
    warnings: list = field(default_factory=list)

    def to_dict(self, provenance=None) -> dict:
        from .models import model_to_dict

        d = {
            "schema_version": 1,
            "model": model_to_dict(self.model),
            "condition": self.condition,
            "residuals": self.residuals,
            "rank_deficient": self.rank_deficient,
            "q_minimized": self.q_minimized,
            "warnings": list(self.warnings),
        }
        if self.moment_match is not None:
            d["moment_match"] = self.moment_match
        if self.optimizer is not None:
            d["optimizer"] = self.optimizer
        if self.diagnostics is not None:
            diag = self.diagnostics
            d["diagnostics"] = {
                "K_eta_x": None if diag.K_eta_x is None else diag.K_eta_x.tolist(),
                "M_eta_x": None if diag.M_eta_x is None else diag.M_eta_x.tolist(),
                "G": diag.G.tolist(),
                "H": diag.H.tolist(),
                "wall_activity": diag.wall_activity,
                "objective_trace": diag.objective_trace,
            }
        if provenance is not None:
            d["provenance"] = provenance
        return d


def white_nlim_fit(m: MomentSet, d: DerivativeSet, constraints: ConstraintSpec | None = None) -> FitReport:
    """Fit the white-noise quadratic model.

    (B, A, C) solve the assembled moment equations; the stochastic matrix
    follows from the stationarity balance
    Q = -1/2 Sym(B x2 M(0) + A K(0) + C E^T).
    """
    D, T = assemble_white_system(m, d)
    B, A, C, cond, residuals, rank_def = _solve_dynamics(D, T, m.n, constraints)
    Q_raw = -0.5 * sym(contract_pair(B, m.M[0]) + A @ m.K[0] + np.outer(C, m.E))
    Q, spd_info = spd_project(Q_raw, label="white-nLIM Q")
    model = QuadModel(B=B, A=A, C=C, Q=Q, noise=NoiseSpec.white())
    warns = []
    if spd_info["clipped"]:
        warns.append("Q eigenvalues clipped to zero")
    return FitReport(
        model=model,
        condition=cond,
        residuals=residuals,
        rank_deficient=rank_def,
        warnings=warns,
    )


def colored_q0(m: MomentSet, d: DerivativeSet, B: QuadTensor, A, C, gamma: float, rel_floor: float = 0.05):
    """Closed-form colored stochastic matrix from the fitted dynamics.

    G and H are the noise contributions left in the K'(0) and M'(0) equations
    once the fitted deterministic terms are subtracted; eliminating the noise
    cross moments against the stationarity of <eta_i x_j> gives
    Q = G - gamma (H x2 B + G A^T), symmetrized.  Returns (Q, G, H).
    """
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float)
    K0, M0, S0, E = m.K[0], m.M[0], m.S[0], m.E
    G = d.K1 - contract_pair(B, M0) - A @ K0 - np.outer(C, E)
    H = d.M1 - contract_pair(B, S0) - np.einsum("ij,jqr->iqr", A, M0) - C[:, None, None] * K0[None, :, :]
    Q_raw = G - gamma * (contract_last_pair(H, B) + G @ A.T)
    Q, spd_info = spd_project(Q_raw, rel_floor=rel_floor, label="colored-nLIM Q0")
    return Q, G, H, spd_info


@dataclass
class QOptConfig:
    """Configuration of the simulated-moment Q refinement.

    The candidate model is simulated with common random numbers (one master
    seed) behind the given wall, chains starting from `init`; the optimizer
    is Nelder-Mead over the lower-triangular Cholesky factor of Q.
    """

    wall: WallSpec
    init: np.ndarray
    seed: int = 0
    n_chains: int = 64
    t_burn: float = 3.0
    t_measure: float = 32.0
    dt: float = 2e-3
    subsample: int = 5
    max_evals: int | None = None
    ftol_rel: float = 1e-6
    diag_floor: float = 1e-8

    def chain_config(self) -> ChainConfig:
        return ChainConfig(
            init=self.init,
            t_burn=self.t_burn,
            t_measure=self.t_measure,
            dt=self.dt,
            subsample=self.subsample,
            seed=self.seed,
            n_chains=self.init.shape[0] if self.init.ndim == 2 else None,
        )


def colored_q_objective(
    Q,
    B: QuadTensor,
    A,
    C,
    gamma: float,
    m_obs: MomentSet,
    cfg: QOptConfig,
    frozen: FrozenNoise | None = None,
    stats_out: dict | None = None,
) -> float:
    """Simulated-moment mismatch of a candidate Q (common random numbers).

    Simulates the model, measures K(0), M(0) and <eta x^T>, and returns
    ||R||_F + ||K(0) - K_obs(0)||_F + ||M(0) - M_obs(0)||_F where R is the
    colored stationarity balance evaluated with observed moments and the
    simulated noise-state covariance.  Divergence counts as +inf.
    """
    Q = np.asarray(Q, dtype=float)
    model = QuadModel(B=B, A=np.asarray(A, float), C=np.asarray(C, float), Q=Q, noise=NoiseSpec.colored(gamma))
    try:
        stats = stationary_moments(
            model, cfg.wall, cfg.chain_config(), max_lag=0, noise_moments=True, frozen=frozen
        )
    except NonFiniteStateError:
        if stats_out is not None:
            stats_out["diverged"] = stats_out.get("diverged", 0) + 1
        return float("inf")
    R = sym(
        contract_pair(B, m_obs.M[0])
        + model.A @ m_obs.K[0]
        + np.outer(model.C, m_obs.E)
        + spd_sqrt(2.0 * Q) @ stats.K_eta_x
    )
    value = float(
        np.linalg.norm(R)
        + np.linalg.norm(stats.K[0] - m_obs.K[0])
        + np.linalg.norm(stats.M[0] - m_obs.M[0])
    )
    if stats_out is not None:
        stats_out["stats"] = stats
    return value


def _chol_pack(Q, n, floor):
    L = np.linalg.cholesky(Q + floor * np.eye(n))
    ti, tj = np.tril_indices(n)
    return L[ti, tj]


def _chol_unpack(theta, n, floor):
    ti, tj = np.tril_indices(n)
    L = np.zeros((n, n))
    L[ti, tj] = theta
    di = np.diag_indices(n)
    L[di] = np.maximum(L[di], floor)
    return L @ L.T


def colored_nlim_fit(
    m: MomentSet,
    d: DerivativeSet,
    gamma: float,
    constraints: ConstraintSpec | None = None,
    opt: QOptConfig | None = None,
) -> FitReport:
    """Fit the colored-noise quadratic model at a prescribed correlation time.

    (B, A, C) solve the noise-eliminated moment equations; Q starts from the
    closed form and, when an optimization config is supplied, is refined by
    Nelder-Mead over its Cholesky factor against the simulated-moment
    objective.  Without a config the closed-form Q is returned as-is
    (`q_minimized` stays False).
    """
    D, T = assemble_colored_system(m, d, gamma)
    B, A, C, cond, residuals, rank_def = _solve_dynamics(D, T, m.n, constraints)
    warns = []
    try:
        Q0, G, H, spd_info = colored_q0(m, d, B, A, C, gamma)
    except IndefiniteMatrixError as exc:
        # Large scales can swamp the closed form (chaotic regimes); keep the
        # clipped repair as an initial guess and make the failure visible.
        warns.append(
            "closed-form Q is indefinite beyond tolerance "
            f"(eigenvalues {np.asarray(exc.eigenvalues).tolist()}); clipped for initialization"
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FitWarning)
            Q0, G, H, spd_info = colored_q0(m, d, B, A, C, gamma, rel_floor=np.inf)
    if spd_info["clipped"]:
        warns.append("Q0 eigenvalues clipped to zero")

    n = m.n
    diagnostics = ColoredDiagnostics(
        K_eta_x=None, M_eta_x=None, G=G, H=H, wall_activity=None, objective_trace=[]
    )
    optimizer = None
    Q = Q0
    q_minimized = False

    if opt is not None:
        frozen = _chain_noise(
            QuadModel(B=B, A=A, C=C, Q=Q0, noise=NoiseSpec.colored(gamma)),
            opt.chain_config(),
            int(round((opt.t_burn + opt.t_measure) / opt.dt)),
        )
        trace = []

        def objective(theta):
            Qc = _chol_unpack(theta, n, opt.diag_floor)
            val = colored_q_objective(Qc, B, A, C, gamma, m, cfg=opt, frozen=frozen)
            trace.append(float(val))
            return val

        x0 = _chol_pack(Q0, n, opt.diag_floor)
        max_evals = opt.max_evals if opt.max_evals is not None else 200 * x0.size
        f0 = objective(x0)
        # Initial simplex steps sized by the observed covariance scale, so a
        # too-small closed-form Q cannot trap the search near zero.
        data_scale = 0.1 * np.sqrt(np.linalg.norm(m.K[0]))
        steps = np.maximum(0.05 * np.abs(x0), data_scale)
        simplex = np.vstack([x0] + [x0 + steps[i] * np.eye(x0.size)[i] for i in range(x0.size)])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FitWarning)
            result = scipy.optimize.minimize(
                objective,
                x0,
                method="Nelder-Mead",
                options={
                    "maxfev": max_evals,
                    "fatol": opt.ftol_rel * max(f0, 1e-12),
                    "xatol": 1e-4 * max(np.max(np.abs(x0)), data_scale),
                    "initial_simplex": simplex,
                },
            )
        theta_best = result.x if result.fun <= f0 else x0
        Q = _chol_unpack(theta_best, n, opt.diag_floor)
        q_minimized = True
        stalled = not result.success and result.fun > f0
        if stalled:
            warns.append("Q optimizer stalled; returning best value seen")
        optimizer = {
            "nfev": int(result.nfev) + 1,
            "converged": bool(result.success),
            "stalled": stalled,
            "initial_objective": float(f0),
            "final_objective": float(min(result.fun, f0)),
        }
        stats_out = {}
        final_val = colored_q_objective(
            Q, B, A, C, gamma, m, cfg=opt, frozen=frozen, stats_out=stats_out
        )
        stats = stats_out.get("stats")
        if stats is not None:
            diagnostics.K_eta_x = stats.K_eta_x
            diagnostics.M_eta_x = stats.M_eta_x
            diagnostics.wall_activity = stats.wall_fraction
            if stats.wall_fraction > 1e-3:
                warns.append(f"wall active on {stats.wall_fraction:.2%} of objective steps")
        diagnostics.objective_trace = trace + [float(final_val)]

    model = QuadModel(B=B, A=A, C=C, Q=Q, noise=NoiseSpec.colored(gamma))
    return FitReport(
        model=model,
        condition=cond,
        residuals=residuals,
        diagnostics=diagnostics,
        q_minimized=q_minimized,
        optimizer=optimizer,
        rank_deficient=rank_def,
        warnings=warns,
    )
