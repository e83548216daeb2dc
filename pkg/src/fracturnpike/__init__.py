"""Exterior optimal control of the 1-D fractional heat equation, with the
machinery to verify averaged and exponential turnpike behavior numerically."""

__version__ = "0.1.0"

from .operators import (
    BetaField,
    DegenerateSystemError,
    DomainSpec,
    FormMatrices,
    Grid1D,
    GridConsistencyError,
    TailMode,
    apply_fractional_laplacian,
    assemble_form,
    bilinear_form,
    dual_norm,
    kernel_tail_rho,
    make_grid,
    nonlocal_normal_derivative,
    norm_collar,
    norm_interior,
    norm_mu,
    normalization_constant,
    robin_extension,
)
from .steady import (
    SteadyTriple,
    dirichlet_map,
    solve_robin_steady,
    solve_steady_optimality,
    transposition_residual,
)
from .evolution import (
    TimeGrid,
    Trajectory,
    control_operator_adjoint,
    solve_adjoint,
    solve_parabolic_dirichlet,
    solve_parabolic_robin,
)
from .control import (
    ControlProblem,
    ConvergenceError,
    OptimalSolution,
    evaluate_cost,
    optimality_residual,
    reduced_gradient,
    solve_optimal,
)
from .turnpike import (
    DeviationCurves,
    TurnpikeReport,
    build_report,
    deviation_curve,
    exp_convolution,
    fit_turnpike_rate,
    scaled_deviation_check,
    scaling_function,
    solution_map_probe,
    time_average,
)
from .config import ConfigError, ExperimentConfig, load_config, validate_config
from .runner import SolverFailure, run_experiment

__all__ = [name for name in dir() if not name.startswith("_")]
