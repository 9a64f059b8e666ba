"""Second-moment dynamics and the deterministic form of the cost.

``X_i(t) = E[x(t) x(t)' 1{theta(t) = i}]`` evolves under the closed loop as
``dX/dt = K_{A+BL}(X)`` restricted to the visited modes. The expected cost
is then a deterministic functional of ``X``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .chain import visited_states
from .errors import DivergenceError, ShapeError, ValidationError
from .grid import TimeGrid
from .model import TOL_PSD, DeterministicState, GaussianState, MatrixCollection, VisitedSet, min_eigenvalues


@dataclass(frozen=True)
class MomentTrajectory:
    grid: TimeGrid
    X: np.ndarray = field(repr=False)  # (K+1, N, n, n)
    visited: VisitedSet

    def total_second_moment(self):
        """``E|x(t)|^2 = sum_i tr X_i(t)`` at every node."""
        return np.trace(self.X, axis1=2, axis2=3).sum(axis=1)


def initial_moments(problem):
    phi = problem.phi
    Z = visited_states(problem.generator, phi)
    s = problem.initial_state
    if isinstance(s, DeterministicState):
        outer = np.outer(s.x0, s.x0)
        X = phi[:, None, None] * outer[None]
    elif isinstance(s, GaussianState):
        cov = np.asarray(s.covariances)
        if np.any(min_eigenvalues(cov) < -TOL_PSD):
            raise ValidationError("covariance not positive semidefinite", field="initial_state.covariances")
        X = phi[:, None, None] * (cov + np.outer(s.mean, s.mean)[None])
    else:
        raise ValidationError("unknown initial state kind", field="initial_state")
    X = np.where(Z.mask[:, None, None], X, 0.0)
    return MatrixCollection(X)


def closed_loop(problem, gains, num_steps):
    """Per-node closed-loop matrices ``A_i + B_i L_i`` and running weights ``Q_i + L_i' R_i L_i``."""
    A, B, Q, R = problem.coefficients(num_steps)
    L = np.asarray(gains, dtype=float)
    if L.shape[0] != num_steps + 1:
        raise ShapeError(f"gain schedule has {L.shape[0]} nodes, grid has {num_steps + 1}")
    M = A + B @ L
    G = Q + L.swapaxes(-1, -2) @ R @ L
    return M, G


def propagate_moments(problem, gains, grid, method="rk4", *, restrict=True, X0=None, use_numba=None):
    """Forward-integrate the closed-loop second moments on ``grid``.

    The gain of node ``k`` is held over the step ``[t_k, t_{k+1}]``.
    """
    if method not in ("rk4", "euler"):
        raise ValueError(f"unknown method {method!r}")
    N = problem.num_modes
    Z = visited_states(problem.generator, problem.phi) if restrict else VisitedSet.full(N)
    X0 = initial_moments(problem) if X0 is None else X0
    M, _ = closed_loop(problem, gains, grid.num_steps)
    X, bad = _kernels.moments_integrate(
        M, problem.generator, np.array(Z.members), np.asarray(X0),
        grid.step, grid.num_steps, rk4=(method == "rk4"), use_numba=use_numba,
    )
    if bad >= 0:
        raise DivergenceError(bad * grid.step)
    X.setflags(write=False)
    return MomentTrajectory(grid, X, Z)


def running_cost_density(trajectory, gains, problem):
    """Per-step weights and the integrand ``<Gamma_k; X>`` at both ends of each step."""
    grid = trajectory.grid
    _, G = closed_loop(problem, gains, grid.num_steps)
    X = trajectory.X
    Gk = G[:-1] if G.shape[0] > 1 else G
    left = np.einsum("kijl,kijl->k", np.broadcast_to(Gk, X[:-1].shape), X[:-1])
    right = np.einsum("kijl,kijl->k", np.broadcast_to(Gk, X[1:].shape), X[1:])
    return left, right


def deterministic_cost(trajectory, gains, problem):
    """Trapezoidal running cost plus ``<Q(T); X(T)>``."""
    gains = np.asarray(gains)
    if gains.shape[0] != trajectory.grid.num_steps + 1:
        raise ShapeError("gain schedule and moment trajectory use different grids")
    left, right = running_cost_density(trajectory, gains, problem)
    running = 0.5 * trajectory.grid.step * float(np.sum(left + right))
    terminal = float(np.einsum("ijk,ijk->", problem.Q_terminal, trajectory.X[-1]))
    return running + terminal
