import numpy as np
import pytest

from nlim.exceptions import NonFiniteStateError
from nlim.linalg import lyapunov_solve
from nlim.models import LinModel, NoiseSpec, QuadModel
from nlim.simulate import (
    ChainConfig,
    SimPlan,
    Trajectory,
    WallSpec,
    default_wall,
    simulate,
    simulate_ensemble,
    stationary_moments,
    strided_initial_states,
    wall_force,
)
from nlim.tensors import QuadTensor


def linear_model(A, Q, noise=None):
    return LinModel(A=np.asarray(A, float), Q=np.asarray(Q, float), noise=noise or NoiseSpec.white())


class TestWallForce:
    def setup_method(self):
        self.wall = WallSpec(center=np.zeros(2), radius=2.0, steepness=20.0)

    def test_inside_is_zero(self):
        np.testing.assert_array_equal(wall_force([1.0, 0.5], self.wall), np.zeros(2))

    def test_formula_outside(self):
        # unit overshoot along e1
        x = np.array([3.0, 0.0])
        w = np.exp(20.0 * 1.0) * np.exp(-1.0)
        np.testing.assert_allclose(wall_force(x, self.wall), [-w * 3.0, 0.0], rtol=1e-12)

    def test_continuous_at_boundary(self):
        x = np.array([2.0 + 1e-6, 0.0])
        assert np.linalg.norm(wall_force(x, self.wall)) <= 1e-100

    def test_batched(self):
        xs = np.array([[1.0, 0.0], [3.0, 0.0]])
        out = wall_force(xs, self.wall)
        assert out.shape == (2, 2)
        assert np.all(out[0] == 0.0) and out[1, 0] < 0.0


class TestDefaultWall:
    def test_constant_data_floor(self):
        data = Trajectory(dt_out=1.0, values=np.tile([2.0, 1.0], (10, 1)))
        wall = default_wall(data)
        np.testing.assert_allclose(wall.center, [2.0, 1.0])
        assert wall.radius == 1.0

    def test_unit_circle(self):
        th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        data = Trajectory(dt_out=1.0, values=np.stack([np.cos(th), np.sin(th)], axis=1))
        wall = default_wall(data, multiplier=5.0)
        np.testing.assert_allclose(wall.radius, 5.0, rtol=1e-12)

    def test_data_strictly_inside(self, rng):
        data = Trajectory(dt_out=1.0, values=rng.normal(size=(200, 3)))
        wall = default_wall(data)
        assert np.all(wall_force(data.values, wall) == 0.0)


class TestSimulate:
    def test_rk4_deterministic_decay(self):
        model = QuadModel(
            B=QuadTensor.zeros(2), A=np.diag([-1.0, -1.0]), C=np.zeros(2),
            Q=np.zeros((2, 2)), noise=NoiseSpec.colored(0.3),
        )
        plan = SimPlan(dt=0.01, t_final=2.0, initial_state=np.array([1.0, -2.0]), seed=0, discard=0.0)
        traj = simulate(model, None, plan)
        ts = np.arange(traj.n_samples) * traj.dt_out
        np.testing.assert_allclose(traj.values, np.exp(-ts)[:, None] * [1.0, -2.0], atol=1e-9)

    def test_bit_determinism(self):
        model = linear_model(np.diag([-1.0, -2.0]), np.eye(2))
        plan = SimPlan(dt=1e-3, t_final=5.0, initial_state=np.zeros(2), subsample=5, seed=123)
        t1 = simulate(model, None, plan)
        t2 = simulate(model, None, plan)
        assert np.array_equal(t1.values, t2.values)

    def test_ensemble_member_matches_lone_run(self):
        model = linear_model(np.diag([-1.0]), np.eye(1))
        plan = SimPlan(dt=1e-3, t_final=2.0, initial_state=np.zeros(1), subsample=2, seed=7)
        members = simulate_ensemble(model, None, plan, 3)
        lone = simulate(model, None, plan)
        assert np.array_equal(members[0].values, lone.values)
        assert not np.array_equal(members[1].values, members[0].values)

    def test_white_covariance_matches_lyapunov(self):
        A = np.array([[-1.0, 0.3], [-0.3, -2.0]])
        Q = np.array([[1.0, 0.2], [0.2, 0.7]])
        plan = SimPlan(dt=1e-3, t_final=1e4, initial_state=np.zeros(2), subsample=10, seed=3)
        traj = simulate(linear_model(A, Q), None, plan)
        K0_hat = traj.values.T @ traj.values / traj.n_samples
        K0 = lyapunov_solve(A, -2.0 * Q)
        assert np.linalg.norm(K0_hat - K0) / np.linalg.norm(K0) < 0.05

    def test_colored_noise_stationary_stats(self):
        # pure noise recording: variance 1/(2 gamma), lag-gamma autocorrelation e^-1/(2 gamma)
        gamma = 0.5
        model = QuadModel(
            B=QuadTensor.zeros(1), A=np.zeros((1, 1)), C=np.zeros(1),
            Q=np.zeros((1, 1)), noise=NoiseSpec.colored(gamma),
        )
        plan = SimPlan(
            dt=1e-3, t_final=1e4, initial_state=np.zeros(1),
            subsample=10, seed=11, record_noise=True, discard=50.0,
        )
        traj = simulate(model, None, plan)
        eta = traj.noise[:, 0]
        var = np.mean(eta**2)
        assert abs(var - 1.0 / (2 * gamma)) < 0.03 * (1.0 / (2 * gamma))
        lag = int(round(gamma / traj.dt_out))
        ac = np.mean(eta[lag:] * eta[:-lag])
        want = np.exp(-1.0) / (2 * gamma)
        assert abs(ac - want) < 0.05 * want

    def test_nonfinite_raises_with_step(self):
        # super-exponential blow-up without a wall
        model = QuadModel(
            B=QuadTensor(1, [[1.0]]), A=np.zeros((1, 1)), C=np.zeros(1),
            Q=np.zeros((1, 1)), noise=NoiseSpec.white(),
        )
        plan = SimPlan(dt=0.5, t_final=100.0, initial_state=np.array([4.0]), seed=0, discard=0.0)
        with pytest.raises(NonFiniteStateError) as err:
            simulate(model, None, plan)
        assert err.value.step > 0

    def test_wall_confines_unstable_model(self):
        model = QuadModel(
            B=QuadTensor(1, [[0.5]]), A=np.array([[0.1]]), C=np.zeros(1),
            Q=np.array([[0.5]]), noise=NoiseSpec.white(),
        )
        wall = WallSpec(center=np.zeros(1), radius=3.0, steepness=20.0)
        plan = SimPlan(dt=1e-3, t_final=50.0, initial_state=np.zeros(1), subsample=10, seed=2, discard=0.0)
        traj = simulate(model, wall, plan)
        assert np.all(np.isfinite(traj.values))
        assert traj.wall_fraction > 0.0

    def test_default_wall_inactive_for_in_distribution_dynamics(self):
        from nlim.experiments import benchmark_2d

        model = benchmark_2d(NoiseSpec.white())
        plan = SimPlan(dt=1e-3, t_final=200.0, initial_state=np.zeros(2), subsample=10, seed=4)
        pilot = simulate(model, None, plan)
        wall = default_wall(pilot)
        traj = simulate(model, wall, plan)
        assert traj.wall_fraction <= 1e-3

    def test_noise_recorded_only_when_asked(self):
        model = linear_model(np.diag([-1.0]), np.eye(1), NoiseSpec.colored(0.5))
        plan = SimPlan(dt=1e-2, t_final=1.0, initial_state=np.zeros(1), seed=0, discard=0.0)
        assert simulate(model, None, plan).noise is None
        plan2 = SimPlan(
            dt=1e-2, t_final=1.0, initial_state=np.zeros(1), seed=0, record_noise=True, discard=0.0
        )
        traj = simulate(model, None, plan2)
        assert traj.noise is not None and traj.noise.shape == traj.values.shape


class TestStationaryMoments:
    def test_matches_lyapunov(self):
        A = np.diag([-1.0, -2.0])
        Q = np.eye(2)
        model = linear_model(A, Q)
        cfg = ChainConfig(
            init=np.zeros((32, 2)), t_burn=5.0, t_measure=160.0, dt=5e-3, subsample=4, seed=17
        )
        stats = stationary_moments(model, None, cfg, max_lag=2)
        K0 = lyapunov_solve(A, -2.0 * Q)
        assert np.linalg.norm(stats.K[0] - K0) / np.linalg.norm(K0) < 0.05

    def test_colored_noise_moments(self):
        gamma = 0.5
        A = np.array([[-1.0]])
        Q = np.array([[1.0]])
        model = linear_model(A, Q, NoiseSpec.colored(gamma))
        cfg = ChainConfig(
            init=np.zeros((64, 1)), t_burn=5.0, t_measure=160.0, dt=2e-3, subsample=5, seed=23
        )
        stats = stationary_moments(model, None, cfg, max_lag=0, noise_moments=True)
        Bm = 1.0 / (1.0 - gamma * A[0, 0])
        want = np.sqrt(Q[0, 0] / 2.0) * Bm  # <eta x> = sqrt(Q/2) B^T
        assert abs(stats.K_eta_x[0, 0] - want) < 0.05 * abs(want)

    def test_deterministic_given_seed(self):
        model = linear_model(np.diag([-1.0]), np.eye(1))
        cfg = ChainConfig(init=np.zeros((8, 1)), t_burn=1.0, t_measure=10.0, dt=1e-2, seed=5)
        s1 = stationary_moments(model, None, cfg)
        s2 = stationary_moments(model, None, cfg)
        assert np.array_equal(s1.K[0], s2.K[0])

    def test_strided_initial_states(self):
        data = Trajectory(dt_out=1.0, values=np.arange(20.0)[:, None])
        init = strided_initial_states(data, 5)
        assert init.shape == (5, 1)
        assert init[0, 0] == 0.0 and init[-1, 0] == 19.0
