"""Numerical laboratory for a 1-D viscoelastic wave equation with memory,
nonlinear damping and a polynomial source term."""

__version__ = "0.1.0"

from .errors import (
    BlowUpDetected,
    ConfigError,
    InsufficientDataError,
    KernelError,
    NonIntegrableTailError,
    QuadratureError,
    SingularDerivativeError,
    TraceFormatError,
    UnsupportedStrategyError,
)
from .kernels import (
    ConvexityData,
    DecayEnvelope,
    KernelAnalysis,
    KernelSpec,
    analyze_kernel,
    canonical_convexity,
    check_domination,
    log_slope_shifted,
    modulus_integral,
    modulus_integral_inverse,
    modulus_slope_map,
    modulus_slope_map_inverse,
    predicted_envelope,
    residual_stiffness,
    smallness_profile,
    validate_kernel,
    weighted_mass,
)
from .prony import PronyModes, fit_exponential_sum, modes_for_kernel
from .solver import (
    DampingSpec,
    ProblemConfig,
    SimulationState,
    apply_div_A_grad,
    cfl_check,
    config_from_json,
    conv_memory_direct,
    conv_memory_prony,
    init_state,
    run,
    solve_damping_pointwise,
    step,
    validate_config,
)
from .energy import (
    WellPosednessReport,
    energy_monotonicity_report,
    jensen_bound_check,
    lambda_monitor,
    potential_well_report,
    sobolev_bound,
    wellposedness_gate,
)
from .decay import (
    DecayFitReport,
    analyze_trace,
    envelope_check,
    fit_envelope,
    fit_exponential,
    fit_polynomial,
    integral_decay_check,
)
from .presets import build_preset, stretched_integral_bound
from .trace import COLUMNS, EnergyTrace
