"""Simulation and rate analysis of stochastic subgradient flows with Tikhonov regularization."""
from .errors import (ConfigError, ContractError, DivergenceError, FitError, QuadratureError,
                     SolverError)
from .integrator import IntegratorConfig, TrajectoryRecord, lyapunov_E, simulate_path
from .montecarlo import EnsembleStats, as_convergence_diagnostic, ergodic_average, run_ensemble
from .problems import ProblemSpec, builtin_problems, make_problem, tikhonov_point
from .schedules import NoiseSchedule, TikhonovSchedule, check_admissibility

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ContractError", "DivergenceError", "FitError", "QuadratureError", "SolverError",
    "IntegratorConfig", "TrajectoryRecord", "lyapunov_E", "simulate_path",
    "EnsembleStats", "as_convergence_diagnostic", "ergodic_average", "run_ensemble",
    "ProblemSpec", "builtin_problems", "make_problem", "tikhonov_point",
    "NoiseSchedule", "TikhonovSchedule", "check_admissibility",
]
