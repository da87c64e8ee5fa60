"""Linear and quadratic stochastic inverse models fitted from lagged moments.

Fits dx/dt = B x^2 + A x + C + sqrt(2Q) * noise (the linear special case has
B = C = 0) to uniformly sampled multivariate series, with the forcing modeled
as Gaussian white noise or Ornstein-Uhlenbeck colored noise, and validates
fits by simulation, moment comparison and distribution distance.
"""

__version__ = "0.1.0"

from .exceptions import NlimError, FitWarning
from .tensors import QuadTensor, quad_features, contract_pair, contract_last_pair, sym
from .linalg import (
    spd_sqrt,
    spd_project,
    matrix_exp,
    exp_integral,
    lyapunov_solve,
    constrained_least_squares,
    ParamMap,
)
from .models import NoiseSpec, LinModel, QuadModel, full_drift, model_to_dict, model_from_dict
from .simulate import (
    WallSpec,
    SimPlan,
    Trajectory,
    wall_force,
    simulate,
    simulate_ensemble,
    default_wall,
    ChainConfig,
    stationary_moments,
    strided_initial_states,
    derive_seed,
)
from .moments import (
    MomentSet,
    DerivativeSet,
    estimate_moments,
    forward_derivatives,
    gaussian_moment_oracle,
    analytic_derivatives,
)
from .lim import white_lim_fit, colored_lim_fit, reconstruct_K, gamma_select, GammaScan, default_gamma_grid
from .nlim import (
    ConstraintSpec,
    Marker,
    apply_constraints,
    assemble_white_system,
    assemble_colored_system,
    white_nlim_fit,
    colored_q0,
    colored_q_objective,
    colored_nlim_fit,
    QOptConfig,
    FitReport,
    ColoredDiagnostics,
)
from .metrics import rel_err, abs_err, wasserstein_1d
from .experiments import benchmark_2d, stochastic_lorenz, lorenz_restriction, run_table1, run_lorenz, ErrorTable
from .preprocess import MonthlySeries, load_monthly_csv, save_monthly_csv, monthly_anomalies

__all__ = [name for name in dir() if not name.startswith("_")]
