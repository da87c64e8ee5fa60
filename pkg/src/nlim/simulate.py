"""Trajectory generation for linear/quadratic models under white or colored noise.

The white-noise path is Euler-Maruyama; the colored path advances the
deterministic part (drift + wall + frozen colored forcing) with classical RK4
while the OU noise itself is updated by Euler-Maruyama and held constant
within each step.  Randomness comes from counter-based Philox streams keyed
by (master seed, stream id), so single runs and ensemble members are
bit-reproducible under any batching.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .exceptions import FitWarning, NonFiniteStateError
from .linalg import spd_sqrt
from .models import LinModel, QuadModel
from .tensors import upper_pairs

_CHUNK = 1 << 16


@dataclass(frozen=True)
class WallSpec:
    """Smooth reflecting force confining trajectories to a ball.

    Outside radius r around x0 the force -w(z) (x - x0) switches on, with
    z the overshoot distance and w(z) = exp(m z) exp(-1/z); w vanishes with
    all derivatives at z = 0, so the dynamics inside are untouched.
    """

    center: np.ndarray
    radius: float
    steepness: float = 20.0
    enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.enabled and not self.radius > 0:
            raise ValueError("wall radius must be positive")
        if self.steepness < 1:
            raise ValueError("wall steepness must be >= 1")

    @classmethod
    def disabled(cls, n: int) -> "WallSpec":
        return cls(center=np.zeros(n), radius=1.0, steepness=20.0, enabled=False)


def wall_force(x, wall: WallSpec) -> np.ndarray:
    """Reflecting force at state(s) x; zero strictly inside the wall radius."""
    x = np.asarray(x, dtype=float)
    dx = x - wall.center
    z = np.linalg.norm(dx, axis=-1) - wall.radius
    w = np.zeros_like(z)
    pos = z > 0
    zp = np.where(pos, z, 1.0)
    w = np.where(pos, np.exp(np.minimum(wall.steepness * zp - 1.0 / zp, 700.0)), 0.0)
    return -w[..., None] * dx


def default_wall(data, multiplier: float = 5.0, steepness: float = 20.0) -> WallSpec:
    """Wall centered at the sample mean with radius multiplier * max excursion.

    Degenerate (constant) data gets a radius floor of one state unit; every
    point of the generating data is strictly inside the returned wall.
    """
    values = data.values if hasattr(data, "values") else np.asarray(data, dtype=float)
    if values.size == 0:
        raise ValueError("empty data")
    x0 = values.mean(axis=0)
    r = multiplier * float(np.max(np.linalg.norm(values - x0, axis=1)))
    if r <= 0.0:
        r = 1.0
    return WallSpec(center=x0, radius=r, steepness=steepness)


@dataclass(frozen=True)
class SimPlan:
    """Integration plan: step dt, duration t_final, output every `subsample`
    steps, Philox master seed, and initial state.  `discard` drops an initial
    transient from the output: "auto" uses 5 / |Re lambda_max(A)| for
    dissipative A (10% of t_final otherwise), a number is a time, 0 keeps all.
    """

    dt: float
    t_final: float
    initial_state: np.ndarray
    subsample: int = 1
    seed: int = 0
    record_noise: bool = False
    discard: object = "auto"

    def __post_init__(self):
        object.__setattr__(self, "initial_state", np.asarray(self.initial_state, dtype=float))
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_final < self.dt:
            raise ValueError("t_final must be at least dt")
        if self.subsample < 1:
            raise ValueError("subsample must be a positive integer")

    @property
    def steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass
class Trajectory:
    """Uniformly sampled multivariate series, optionally with the aligned
    colored-noise samples that produced it."""

    dt_out: float
    values: np.ndarray
    noise: np.ndarray | None = None
    wall_fraction: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] < 2:
            raise ValueError("trajectory needs at least two samples of a vector state")
        if self.noise is not None:
            self.noise = np.asarray(self.noise, dtype=float)
            if self.noise.shape != self.values.shape:
                raise ValueError("noise record must align with values")

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def duration(self) -> float:
        return (self.n_samples - 1) * self.dt_out


def _stream_rng(seed: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(*parts) -> int:
    """Deterministic 64-bit sub-seed from a master seed and integer tags."""
    ss = np.random.SeedSequence(entropy=[int(p) for p in parts])
    return int(ss.generate_state(1, np.uint64)[0])


def transient_time(model, t_final: float) -> float:
    """Default stationarity burn-in: 5 / |Re lambda_max(A)|, else 10% of t_final."""
    lam = np.linalg.eigvals(np.asarray(model.A, dtype=float))
    re_max = float(np.max(lam.real))
    if re_max < 0:
        return min(5.0 / abs(re_max), 0.5 * t_final)
    return 0.1 * t_final


def _as_quad(model) -> QuadModel:
    return model.as_quad() if isinstance(model, LinModel) else model


def simulate(model, wall: WallSpec | None, plan: SimPlan) -> Trajectory:
    """Integrate one realization of the model under the plan's master seed."""
    return _run_streams(model, wall, plan, [0])[0]


def simulate_ensemble(model, wall: WallSpec | None, plan: SimPlan, n_realizations: int) -> list[Trajectory]:
    """Independent realizations on streams 0..n-1 of the plan's master seed.

    Member r is bit-identical to what a lone run on stream r would produce.
    """
    return _run_streams(model, wall, plan, list(range(n_realizations)))


def _run_streams(model, wall, plan, streams) -> list[Trajectory]:
    model = _as_quad(model)
    n = model.n
    if plan.initial_state.shape != (n,):
        raise ValueError("initial state has wrong dimension")
    colored = model.noise.is_colored
    steps = plan.steps
    sub = plan.subsample
    R = len(streams)

    Bd = np.ascontiguousarray(model.B.data)
    pj, pk = upper_pairs(n)
    A = np.ascontiguousarray(model.A)
    C = np.ascontiguousarray(model.C)
    S2Q = spd_sqrt(2.0 * model.Q)
    dt = plan.dt

    if wall is None or not wall.enabled:
        wall_on = False
        wc = np.zeros(n)
        wr = 1.0
        wm = 1.0
    else:
        wall_on = True
        wc = np.ascontiguousarray(wall.center)
        wr = float(wall.radius)
        wm = float(wall.steepness)
    wcap = 1.0 / dt

    x = np.tile(plan.initial_state, (R, 1))
    n_rec = steps // sub
    out = np.empty((R, 1 + n_rec, n))
    out[:, 0] = x
    record_eta = colored and plan.record_noise
    out_eta = np.empty((R, 1 + n_rec, n)) if record_eta else None

    rngs = [_stream_rng(plan.seed, s) for s in streams]
    if colored:
        gamma = model.noise.gamma
        eta = np.empty((R, n))
        for r in range(R):
            eta[r] = rngs[r].standard_normal(n) * math.sqrt(1.0 / (2.0 * gamma))
        if record_eta:
            out_eta[:, 0] = eta

    pos = 1
    g0 = 0
    wall_steps = 0
    LdW = S2Q * math.sqrt(dt)
    while g0 < steps:
        K = min(_CHUNK, steps - g0)
        xi = np.empty((R, K, n))
        for r in range(R):
            xi[r] = rngs[r].standard_normal((K, n))
        if colored:
            eta_chunk = np.empty((R, K + 1, n))
            _kernels.ou_path(eta, xi, 1.0 - dt / gamma, math.sqrt(dt) / gamma, eta_chunk)
            new_pos, hits, bad = _kernels.rk4_colored(
                x, Bd, pj, pk, A, C, S2Q, eta_chunk, wall_on, wc, wr, wm, wcap, dt, sub, g0, out, pos
            )
            if record_eta:
                ks = np.arange(1, K + 1)
                ks = ks[(g0 + ks) % sub == 0]
                if bad >= 0:
                    ks = ks[(g0 + ks) <= bad - 1]
                out_eta[:, pos : pos + len(ks)] = eta_chunk[:, ks]
            eta = np.ascontiguousarray(eta_chunk[:, K])
        else:
            new_pos, hits, bad = _kernels.euler_white(
                x, Bd, pj, pk, A, C, LdW, wall_on, wc, wr, wm, wcap, dt, xi, sub, g0, out, pos
            )
        wall_steps += hits
        pos = new_pos
        if bad >= 0:
            raise NonFiniteStateError(bad)
        g0 += K

    wall_fraction = wall_steps / (R * steps) if wall_on else 0.0
    if wall_on and wall_fraction > 1e-3:
        warnings.warn(f"wall active on {wall_fraction:.2%} of steps", FitWarning, stacklevel=2)

    dt_out = dt * sub
    if plan.discard == "auto":
        t_disc = transient_time(model, plan.t_final)
    else:
        t_disc = float(plan.discard)
    skip = min(int(math.ceil(t_disc / dt_out)), pos - 2) if t_disc > 0 else 0

    trajs = []
    for r in range(R):
        trajs.append(
            Trajectory(
                dt_out=dt_out,
                values=out[r, skip:pos].copy(),
                noise=out_eta[r, skip:pos].copy() if record_eta else None,
                wall_fraction=wall_fraction,
            )
        )
    return trajs


@dataclass
class ChainConfig:
    """Ensemble-of-chains sampler configuration for stationary statistics.

    Chains start from the given states, burn in for t_burn, then contribute
    t_measure time units each; the pooled sample has n_chains * t_measure
    effective length with only t_burn + t_measure sequential integration.
    """

    init: np.ndarray
    t_burn: float
    t_measure: float
    dt: float
    subsample: int = 1
    seed: int = 0
    n_chains: int | None = None

    def __post_init__(self):
        self.init = np.atleast_2d(np.asarray(self.init, dtype=float))
        if self.n_chains is None:
            self.n_chains = self.init.shape[0]
        elif self.init.shape[0] != self.n_chains:
            raise ValueError("init must supply one state per chain")


@dataclass
class StationaryStats:
    """Pooled stationary moments measured from an ensemble of chains."""

    E: np.ndarray
    K: list
    M: list
    K_eta_x: np.ndarray | None
    M_eta_x: np.ndarray | None
    wall_fraction: float
    samples: np.ndarray

    @property
    def third_central(self) -> np.ndarray:
        d = self.samples - self.samples.mean(axis=0)
        return (d**3).mean(axis=0)


class FrozenNoise:
    """Precomputed noise paths shared across repeated chain samplings.

    For colored models the OU path never depends on the state, so objective
    evaluations with common random numbers can reuse one realization.
    """

    def __init__(self, kind, eta=None, xi=None):
        self.kind = kind
        self.eta = eta
        self.xi = xi


def _chain_noise(model, cfg: ChainConfig, steps: int) -> FrozenNoise:
    """Noise paths for the chain sampler.

    Unlike the trajectory integrator (which follows the documented
    Euler-Maruyama noise update), the sampler advances the OU noise with its
    exact one-step law, so coarse steps carry no noise-variance bias into the
    measured moments.
    """
    model = _as_quad(model)
    R = cfg.n_chains
    n = model.n
    rngs = [_stream_rng(cfg.seed, r) for r in range(R)]
    xi = np.empty((R, steps, n))
    if model.noise.is_colored:
        gamma = model.noise.gamma
        eta0 = np.empty((R, n))
        for r in range(R):
            eta0[r] = rngs[r].standard_normal(n) * math.sqrt(1.0 / (2.0 * gamma))
            xi[r] = rngs[r].standard_normal((steps, n))
        eta = np.empty((R, steps + 1, n))
        decay = math.exp(-cfg.dt / gamma)
        kick = math.sqrt((1.0 - decay**2) / (2.0 * gamma))
        _kernels.ou_path(eta0, xi, decay, kick, eta)
        return FrozenNoise("colored", eta=eta)
    for r in range(R):
        xi[r] = rngs[r].standard_normal((steps, n))
    return FrozenNoise("white", xi=xi)


def stationary_moments(
    model,
    wall: WallSpec | None,
    cfg: ChainConfig,
    max_lag: int = 0,
    noise_moments: bool = False,
    frozen: FrozenNoise | None = None,
) -> StationaryStats:
    """Sample stationary moments of a model from parallel chains.

    Returns pooled E, lagged K and M up to max_lag (in output-sample lags),
    and, for colored models with noise_moments, the noise-state cross moments
    <eta x^T> and <eta x x>.  Raises NonFiniteStateError on divergence.
    """
    model = _as_quad(model)
    n = model.n
    cfg_steps = int(round((cfg.t_burn + cfg.t_measure) / cfg.dt))
    sub = cfg.subsample
    if frozen is None:
        frozen = _chain_noise(model, cfg, cfg_steps)

    Bd = np.ascontiguousarray(model.B.data)
    pj, pk = upper_pairs(n)
    A = np.ascontiguousarray(model.A)
    C = np.ascontiguousarray(model.C)
    S2Q = spd_sqrt(2.0 * model.Q)
    dt = cfg.dt
    if wall is None or not wall.enabled:
        wall_on, wc, wr, wm = False, np.zeros(n), 1.0, 1.0
    else:
        wall_on, wc, wr, wm = True, np.ascontiguousarray(wall.center), float(wall.radius), float(wall.steepness)

    R = cfg.n_chains
    x = cfg.init.copy()
    n_rec = cfg_steps // sub
    out = np.empty((R, 1 + n_rec, n))
    out[:, 0] = x
    if model.noise.is_colored:
        pos, hits, bad = _kernels.rk4_colored(
            x, Bd, pj, pk, A, C, S2Q, frozen.eta, wall_on, wc, wr, wm, 1.0 / dt, dt, sub, 0, out, 1
        )
    else:
        LdW = S2Q * math.sqrt(dt)
        pos, hits, bad = _kernels.euler_white(
            x, Bd, pj, pk, A, C, LdW, wall_on, wc, wr, wm, 1.0 / dt, dt, frozen.xi, sub, 0, out, 1
        )
    if bad >= 0:
        raise NonFiniteStateError(bad)

    skip = int(math.ceil(cfg.t_burn / (dt * sub)))
    xs = out[:, skip:pos]
    T = xs.shape[1]
    if T <= max_lag:
        raise ValueError("measurement window too short for requested lags")

    E = xs.reshape(-1, n).mean(axis=0)
    K = []
    M = []
    for k in range(max_lag + 1):
        lead = xs[:, k:]
        base = xs[:, : T - k]
        cnt = R * (T - k)
        K.append(np.einsum("rti,rtj->ij", lead, base, optimize=True) / cnt)
        M.append(np.einsum("rti,rtj,rtk->ijk", lead, base, base, optimize=True) / cnt)

    K_eta_x = M_eta_x = None
    if noise_moments:
        if not model.noise.is_colored:
            raise ValueError("noise moments are defined for colored models only")
        ks = np.arange(1, cfg_steps + 1)
        ks = ks[ks % sub == 0]
        etas = frozen.eta[:, np.concatenate(([0], ks))][:, skip:pos]
        cnt = R * T
        K_eta_x = np.einsum("rti,rtj->ij", etas, xs, optimize=True) / cnt
        M_eta_x = np.einsum("rti,rtj,rtk->ijk", etas, xs, xs, optimize=True) / cnt

    return StationaryStats(
        E=E,
        K=K,
        M=M,
        K_eta_x=K_eta_x,
        M_eta_x=M_eta_x,
        wall_fraction=hits / (R * cfg_steps) if wall_on else 0.0,
        samples=xs.reshape(-1, n),
    )


def strided_initial_states(data, n_chains: int) -> np.ndarray:
    """Deterministic chain seeds: evenly strided rows of an observed trajectory."""
    values = data.values if hasattr(data, "values") else np.asarray(data, dtype=float)
    idx = np.linspace(0, len(values) - 1, n_chains).astype(int)
    return values[idx].copy()
