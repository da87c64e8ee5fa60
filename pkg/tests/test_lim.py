import numpy as np
import pytest

from nlim.exceptions import AllFitsFailedError, FitWarning, InsufficientLagsError
from nlim.lim import colored_lim_fit, default_gamma_grid, gamma_select, reconstruct_K, white_lim_fit
from nlim.models import LinModel, NoiseSpec
from nlim.moments import (
    MomentSet,
    analytic_derivatives,
    estimate_moments,
    forward_derivatives,
    gaussian_moment_oracle,
)
from nlim.simulate import SimPlan, simulate
from nlim.tensors import sym


def scalar_moments(K0, K1, K2):
    m = MomentSet(
        n=1, dt=0.01, E=np.zeros(1), K=np.array([[[K0]], [[K0 + 0.01 * K1]], [[K0 + 0.02 * K1]]]),
        M=np.zeros((3, 1, 1, 1)), S=3 * K0**2 * np.ones((2, 1, 1, 1, 1)),
    )
    from nlim.moments import DerivativeSet

    d = DerivativeSet(
        K1=np.array([[K1]]), K2=np.array([[K2]]),
        M1=np.zeros((1, 1, 1)), M2=np.zeros((1, 1, 1)),
        S1=np.zeros((1, 1, 1, 1)), scheme="manual",
    )
    return m, d


class TestWhiteLim:
    def test_scalar(self):
        m, d = scalar_moments(K0=1.0, K1=-1.0, K2=1.0)
        fit = white_lim_fit(m, d)
        np.testing.assert_allclose(fit.A, [[-1.0]])
        np.testing.assert_allclose(fit.Q, [[1.0]])

    def test_oracle_moments_recover_dynamics(self):
        A = np.diag([-1.0, -2.0])
        Q = np.eye(2)
        m = gaussian_moment_oracle(A, Q, dt=0.01, max_lag=2)
        fit = white_lim_fit(m, forward_derivatives(m))
        # residual is the forward-difference bias only
        assert np.linalg.norm(fit.A - A) / np.linalg.norm(A) < 0.01

    def test_q_equals_minus_kprime_for_symmetric_case(self):
        # K'(0) symmetric negative definite => Q = -K'(0) exactly
        A = np.diag([-1.0, -0.5])
        m = gaussian_moment_oracle(A, np.diag([1.0, 0.25]), dt=0.01, max_lag=2)
        d = analytic_derivatives(A, np.diag([1.0, 0.25]))
        fit = white_lim_fit(m, d)
        np.testing.assert_allclose(fit.Q, -d.K1, atol=1e-12)

    def test_fdr_residual_small(self):
        A = np.array([[-1.0, 0.4], [-0.6, -1.5]])
        Q = np.array([[1.0, 0.2], [0.2, 0.8]])
        m = gaussian_moment_oracle(A, Q, dt=0.01, max_lag=2)
        fit = white_lim_fit(m, forward_derivatives(m))
        assert fit.info["fdr_residual"] <= 1e-10

    def test_mean_warning(self):
        m = gaussian_moment_oracle(np.diag([-1.0]), np.eye(1), dt=0.01, max_lag=2)
        biased = MomentSet(n=1, dt=m.dt, E=np.array([0.5]), K=m.K, M=m.M, S=m.S)
        with pytest.warns(FitWarning):
            white_lim_fit(biased, forward_derivatives(biased))


class TestColoredLim:
    A = np.array([[-1.0, 0.5], [-0.3, -1.5]])
    Q = np.array([[0.8, 0.2], [0.2, 0.6]])

    def test_white_noise_limit(self):
        m = gaussian_moment_oracle(self.A, self.Q, dt=0.01, max_lag=2)
        d = forward_derivatives(m)
        white = white_lim_fit(m, d)
        colored = colored_lim_fit(m, d, gamma=1e-9)
        assert np.linalg.norm(colored.A - white.A) <= 1e-6 * np.linalg.norm(white.A)

    def test_scalar_exact_colored_law(self):
        # analytic colored correlation at dt=0.001, gamma=0.5, a=-1, q=1
        m = gaussian_moment_oracle(
            np.array([[-1.0]]), np.array([[1.0]]), dt=1e-3, max_lag=2, gamma=0.5
        )
        fit = colored_lim_fit(m, forward_derivatives(m), gamma=0.5)
        assert abs(fit.A[0, 0] + 1.0) < 0.01
        assert abs(fit.Q[0, 0] - 1.0) < 0.02

    def test_b_matrix_identity_at_tiny_gamma(self):
        m = gaussian_moment_oracle(self.A, self.Q, dt=0.01, max_lag=2)
        d = analytic_derivatives(self.A, self.Q)
        fit = colored_lim_fit(m, d, gamma=1e-9)
        Bm = np.linalg.inv(np.eye(2) - 1e-9 * fit.A)
        np.testing.assert_allclose(Bm, np.eye(2), atol=1e-7)

    def test_colored_fdr_residual(self):
        gamma = 0.5
        m = gaussian_moment_oracle(self.A, self.Q, dt=0.01, max_lag=2, gamma=gamma)
        d = analytic_derivatives(self.A, self.Q, gamma=gamma)
        fit = colored_lim_fit(m, d, gamma)
        Bm = np.linalg.inv(np.eye(2) - gamma * fit.A)
        res = sym(fit.A @ m.K[0] + fit.Q @ Bm.T)
        assert np.linalg.norm(res) <= 1e-9

    def test_exact_derivatives_recover_exactly(self):
        gamma = 0.5
        m = gaussian_moment_oracle(self.A, self.Q, dt=0.01, max_lag=2, gamma=gamma)
        d = analytic_derivatives(self.A, self.Q, gamma=gamma)
        fit = colored_lim_fit(m, d, gamma)
        np.testing.assert_allclose(fit.A, self.A, atol=1e-10)
        np.testing.assert_allclose(fit.Q, self.Q, atol=1e-10)


class TestReconstructK:
    def test_white_at_zero(self):
        fit = LinModel(A=np.diag([-1.0]), Q=np.eye(1), noise=NoiseSpec.white())
        K0 = np.array([[2.0]])
        np.testing.assert_allclose(reconstruct_K(fit, K0, [0.0])[0], K0)

    def test_colored_at_zero(self):
        fit = LinModel(A=np.diag([-1.0]), Q=np.eye(1), noise=NoiseSpec.colored(0.5))
        K0 = np.array([[2.0]])
        np.testing.assert_allclose(reconstruct_K(fit, K0, [0.0])[0], K0, atol=1e-14)

    def test_white_semigroup(self):
        # K(s + t) = exp(s A) K(t)
        from nlim.linalg import matrix_exp

        A = np.array([[-1.0, 0.3], [-0.2, -0.7]])
        fit = LinModel(A=A, Q=np.eye(2), noise=NoiseSpec.white())
        K = reconstruct_K(fit, np.eye(2), [0.2, 0.5, 0.7])
        np.testing.assert_allclose(K[2], matrix_exp(A, 0.2) @ K[1], atol=1e-10)
        np.testing.assert_allclose(K[2], matrix_exp(A, 0.5) @ K[0], atol=1e-10)

    def test_negative_lag_rejected(self):
        fit = LinModel(A=np.diag([-1.0]), Q=np.eye(1), noise=NoiseSpec.white())
        with pytest.raises(ValueError):
            reconstruct_K(fit, np.eye(1), [-0.1])

    def test_colored_scalar_vs_long_simulation(self):
        a, q, gamma = -1.0, 1.0, 0.5
        model = LinModel(A=np.array([[a]]), Q=np.array([[q]]), noise=NoiseSpec.colored(gamma))
        plan = SimPlan(dt=1e-3, t_final=1e4, initial_state=np.zeros(1), subsample=100, seed=41)
        est = estimate_moments(simulate(model, None, plan), max_lag=10, max_lag_s=1)
        taus = np.arange(11) * 0.1
        K = reconstruct_K(model, est.K[0], taus)
        np.testing.assert_allclose(K[:, 0, 0], est.K[:, 0, 0], rtol=0.02, atol=0.02)


class TestGammaSelect:
    def _colored_moments(self, gamma_true=0.5):
        A = np.array([[-1.0, 0.5], [-0.3, -1.5]])
        Q = np.array([[0.8, 0.2], [0.2, 0.6]])
        m = gaussian_moment_oracle(A, Q, dt=0.01, max_lag=150, max_lag_s=1, gamma=gamma_true)
        return m, forward_derivatives(m)

    def test_recovers_gamma_from_exact_moments(self):
        m, d = self._colored_moments(0.5)
        scan = gamma_select(m, d, default_gamma_grid(), window=1.0)
        grid = scan.grid
        target = np.argmin(np.abs(np.log(grid) - np.log(0.5)))
        assert abs(scan.best_index - target) <= 1

    def test_objective_prefers_true_q(self):
        # at the generating parameters the misfit beats a 2x-scaled Q
        m, d = self._colored_moments(0.5)
        model_true = colored_lim_fit(m, d, 0.5)
        taus = np.arange(101) * m.dt
        K_true = reconstruct_K(model_true, m.K[0], taus)
        bad = LinModel(A=model_true.A, Q=2.0 * model_true.Q, noise=model_true.noise)
        K_bad = reconstruct_K(bad, m.K[0], taus)
        obs = m.K[:101]
        assert np.linalg.norm(K_true - obs) <= np.linalg.norm(K_bad - obs)

    def test_single_point_grid(self):
        m, d = self._colored_moments(0.5)
        scan = gamma_select(m, d, np.array([0.3]), window=1.0)
        assert scan.best == 0.3

    def test_window_longer_than_lags(self):
        m, d = self._colored_moments(0.5)
        with pytest.raises(InsufficientLagsError):
            gamma_select(m, d, np.array([0.3]), window=100.0)

    def test_all_fits_failed(self):
        m, d = self._colored_moments(0.5)
        # negative-gamma style failure cannot be built from the public grid
        # (validated increasing positive), so poison the regressor instead
        bad = MomentSet(n=2, dt=m.dt, E=m.E, K=np.zeros_like(m.K), M=m.M, S=m.S)
        from nlim.moments import DerivativeSet

        zero_d = DerivativeSet(
            K1=np.zeros((2, 2)), K2=np.zeros((2, 2)),
            M1=np.zeros((2, 2, 2)), M2=np.zeros((2, 2, 2)),
            S1=np.zeros((2, 2, 2, 2)), scheme="manual",
        )
        with pytest.raises(AllFitsFailedError):
            gamma_select(bad, zero_d, np.array([0.1, 0.5]), window=1.0)
