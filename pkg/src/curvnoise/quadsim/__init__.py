from ._scan import ENGINE
from .core import (
    BoundInapplicableError,
    DEFAULT_GAMMA_GRID,
    InstabilityError,
    MethodSpec,
    MomentState,
    NoFeasibleStepsizeError,
    NoiseGeometry,
    NotSimultaneouslyDiagonalizableError,
    OptimizeResult,
    Prop2Report,
    QuadraticProblem,
    TABLE_GAMMA_GRID,
    ThresholdOutcome,
    check_prop2_bound,
    default_alpha_grid,
    expected_subopt,
    initial_state,
    limit_cycle_polyak,
    limit_cycle_sg,
    lyapunov_residual,
    make_problem,
    optimize_stepsize,
    simulate_paths,
    stationary_sigma,
    step_moments,
    steps_to_threshold,
)

__all__ = [
    "ENGINE",
    "BoundInapplicableError",
    "DEFAULT_GAMMA_GRID",
    "InstabilityError",
    "MethodSpec",
    "MomentState",
    "NoFeasibleStepsizeError",
    "NoiseGeometry",
    "NotSimultaneouslyDiagonalizableError",
    "OptimizeResult",
    "Prop2Report",
    "QuadraticProblem",
    "TABLE_GAMMA_GRID",
    "ThresholdOutcome",
    "check_prop2_bound",
    "default_alpha_grid",
    "expected_subopt",
    "initial_state",
    "limit_cycle_polyak",
    "limit_cycle_sg",
    "lyapunov_residual",
    "make_problem",
    "optimize_stepsize",
    "simulate_paths",
    "stationary_sigma",
    "step_moments",
    "steps_to_threshold",
]
