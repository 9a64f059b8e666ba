"""Monte Carlo estimate of the closed-loop quadratic cost.

Each path draws a chain realization and an initial state from its own
counter-based generator keyed on ``(master_seed, path_index)``, so the
estimate does not depend on evaluation order or thread count. Jumps are
snapped to the last grid node at or before the jump time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .chain import JumpPath, _jump_tables, _sample_path, path_rng
from .errors import DivergenceError, ValidationError
from .model import DeterministicState, GaussianState
from .moments import closed_loop

DEFAULT_PATHS = 10_000


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    std_error: float
    num_paths: int

    @property
    def confidence95(self):
        return (self.mean - 1.96 * self.std_error, self.mean + 1.96 * self.std_error)


@dataclass(frozen=True)
class PathResult:
    path: JumpPath
    x0: np.ndarray
    states: np.ndarray  # (K+1, n)
    cost: float


def _psd_sqrt(cov):
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


class _Sampler:
    """Draws (jump path, initial state) pairs for one problem."""

    def __init__(self, problem):
        self.problem = problem
        self.tables = _jump_tables(problem.generator, problem.phi)
        s = problem.initial_state
        if isinstance(s, GaussianState):
            self.roots = np.array([_psd_sqrt(c) for c in s.covariances])
        elif not isinstance(s, DeterministicState):
            raise ValidationError("unknown initial state kind", field="initial_state")

    def draw(self, rng):
        path = _sample_path(self.tables, self.problem.horizon, rng)
        s = self.problem.initial_state
        if isinstance(s, DeterministicState):
            x0 = np.array(s.x0)
        else:
            z = rng.standard_normal(s.mean.shape[0])
            x0 = s.mean + self.roots[path.modes[0]] @ z
        return path, x0


def simulate_path(problem, solution, path_seed, *, use_numba=None):
    """Simulate one closed-loop path and return its states and cost."""
    grid = solution.grid
    path, x0 = _Sampler(problem).draw(path_rng(path_seed))
    M, G = closed_loop(problem, solution.gains, grid.num_steps)
    states, cost = _kernels.mc_single_path(
        x0, path.node_starts(grid), np.array(path.modes), M, G, problem.Q_terminal,
        grid.step, grid.num_steps, use_numba=use_numba,
    )
    if not np.isfinite(cost):
        raise DivergenceError(grid.horizon, f"path {path_seed!r} diverged")
    return PathResult(path, x0, states, cost)


def sample_batch(problem, grid, num_paths, master_seed):
    """Per-path initial states and snapped jump tables, in path order."""
    sampler = _Sampler(problem)
    x0s = np.empty((num_paths, problem.state_dim))
    offsets = np.zeros(num_paths + 1, dtype=np.int64)
    nodes, modes, paths = [], [], []
    for p in range(num_paths):
        path, x0s[p] = sampler.draw(path_rng([master_seed, p]))
        nodes.append(path.node_starts(grid))
        modes.append(path.modes)
        paths.append(path)
        offsets[p + 1] = offsets[p] + len(path.modes)
    return x0s, offsets, np.concatenate(nodes), np.concatenate([np.asarray(m) for m in modes]), paths


def path_costs(problem, solution, num_paths, master_seed, *, use_numba=None):
    grid = solution.grid
    x0s, offsets, nodes, modes, paths = sample_batch(problem, grid, num_paths, master_seed)
    M, G = closed_loop(problem, solution.gains, grid.num_steps)
    costs = _kernels.mc_path_costs(
        x0s, offsets, nodes, modes, M, G, problem.Q_terminal, grid.step, grid.num_steps,
        use_numba=use_numba,
    )
    bad = np.flatnonzero(~np.isfinite(costs))
    if bad.size:
        raise DivergenceError(grid.horizon, f"{bad.size} paths diverged (first: path {bad[0]})")
    return costs, paths


def estimate_cost(problem, solution, num_paths=DEFAULT_PATHS, master_seed=42, *, use_numba=None):
    """Mean and standard error of the path cost over ``num_paths`` paths."""
    if num_paths < 2:
        raise ValidationError("need at least two paths", field="num_paths")
    costs, _ = path_costs(problem, solution, num_paths, master_seed, use_numba=use_numba)
    if np.all(costs == costs[0]):
        # identical paths: skip the rounding noise of mean and std
        mean, se = float(costs[0]), 0.0
    else:
        mean = float(np.mean(costs))
        se = float(np.std(costs, ddof=1) / np.sqrt(num_paths))
    return CostEstimate(mean, se, int(num_paths))
