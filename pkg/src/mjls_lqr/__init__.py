"""Finite-horizon LQR for continuous-time Markov jump linear systems."""

from .chain import (
    JumpPath,
    ModeProbabilities,
    mode_probabilities,
    sample_path,
    validate_generator,
    visited_states,
)
from .errors import (
    DivergenceError,
    FactorizationError,
    MJLSError,
    NumericalError,
    ShapeError,
    SubspaceError,
    ValidationError,
)
from .grid import TimeGrid
from .model import (
    DeterministicState,
    GainCollection,
    GaussianState,
    MatrixCollection,
    ProblemInstance,
    VisitedSet,
    apply_H,
    apply_H_restricted,
    apply_K,
    apply_K_restricted,
    inner_product,
    project,
)
from .moments import MomentTrajectory, deterministic_cost, initial_moments, propagate_moments
from .montecarlo import CostEstimate, estimate_cost, simulate_path
from .problem_file import load_problem, parse_problem, serialize_problem
from .riccati import RiccatiSolution, gain_at, optimal_cost, solve_riccati

__version__ = "0.1.0"
