"""Large-deviations, Hamilton-Jacobi and entropy-balance tools for jump-diffusion generators."""

__version__ = "0.1.0"

from .determlimit import NumericalError, OdeConfig, find_fixed_point, integrate_ode, vector_field
from .estimator import RateFunctionEstimator
from .ldp import (
    ActionOptions,
    DiscretePath,
    PhasePoint,
    hamilton_rhs,
    hamiltonian,
    integrate_hamilton,
    lagrangian,
    legendre_momentum,
    minimize_action,
    path_action,
)
from .model import (
    DriftDiffusion,
    GeneratorSpec,
    JumpChannelPair,
    ModelError,
    RateLaw,
    birth_death_spec,
    evaluate_drift,
    evaluate_rate,
    hybrid_spec,
    load_model,
    make_spec,
    ou_spec,
    spec_from_config,
    validate_spec,
)
from .quasipotential import (
    QuadraticRate,
    RelativeEntropyRate,
    crn_relative_entropy,
    gaussian_quadratic,
    lyapunov_scan,
    ou_quadratic,
    ou_rate_function,
    stationary_hje_residual,
    transient_hje_residual,
)
from .simulate import SimConfig, empirical_rate_function, ensemble_histogram, sample_states, simulate_paths
from .trajectory import Trajectory
