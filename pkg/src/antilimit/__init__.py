"""Anti-integrable limit toolkit for quasi-periodically forced lattice systems."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AntilimitError,
    BoundaryEscapeError,
    ConfigurationError,
    ContractError,
    DegeneratePotentialError,
    DiagnosticError,
    ExistenceViolation,
    HypothesisViolation,
    NoConvergenceError,
    ResolutionError,
)
from .model import (  # noqa: E402
    BaseDynamics,
    ModelInstance,
    ScalarField,
    builtin_model,
    estimate_epsilon0,
    eval_f,
    model_from_config,
    verify_conditions,
)
from .levelset import check_projection_bound, scan_fiber_1d, scan_fiber_2d  # noqa: E402
from .orbits import extend_segment, solve_backward_1d, solve_forward_1d, solve_window_2d  # noqa: E402
from .cantor import certify, refine_1d, refine_2d  # noqa: E402
from .rotation import construct_rotation_orbit, measure_rotation_number, staircase  # noqa: E402
from .fhim import (  # noqa: E402
    TorusGrid,
    continue_parameter,
    derivative_growth,
    gradient_flow,
    iterate_skew,
    lyapunov_exponents,
    newton_solve_K,
)

__all__ = [
    "AntilimitError", "BoundaryEscapeError", "ConfigurationError", "ContractError",
    "DegeneratePotentialError", "DiagnosticError", "ExistenceViolation", "HypothesisViolation",
    "NoConvergenceError", "ResolutionError",
    "BaseDynamics", "ModelInstance", "ScalarField", "builtin_model", "estimate_epsilon0", "eval_f",
    "model_from_config", "verify_conditions",
    "check_projection_bound", "scan_fiber_1d", "scan_fiber_2d",
    "extend_segment", "solve_backward_1d", "solve_forward_1d", "solve_window_2d",
    "certify", "refine_1d", "refine_2d",
    "construct_rotation_orbit", "measure_rotation_number", "staircase",
    "TorusGrid", "continue_parameter", "gradient_flow", "iterate_skew", "lyapunov_exponents",
    "newton_solve_K", "derivative_growth",
]
