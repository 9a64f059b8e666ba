"""Coupled Riccati terminal-value problem and the optimal gain schedule.

For every visited mode ``i`` the backward sweep integrates

    -dY_i/dt = A_i' Y_i + Y_i A_i + sum_{j in Z} lam_ij Y_j + Q_i - Y_i B_i R_i^{-1} B_i' Y_i

from ``Y_i(T) = Q_i(T)``. Modes outside the visited set keep ``Y_i = 0``
and a zero gain.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _kernels
from .chain import visited_states
from .errors import DivergenceError, FactorizationError, SubspaceError
from .grid import TimeGrid
from .model import TOL_PSD, TOL_ZERO, GainCollection, MatrixCollection, VisitedSet, min_eigenvalues

__all__ = [
    "TimeGrid",
    "RiccatiSolution",
    "solve_riccati",
    "gain_at",
    "optimal_cost",
    "input_weight_inverse",
]

METHODS = ("rk4", "backward_euler")


@dataclass(frozen=True)
class RiccatiSolution:
    grid: TimeGrid
    Y: np.ndarray = field(repr=False)  # (K+1, N, n, n)
    gains: np.ndarray = field(repr=False)  # (K+1, N, m, n)
    visited: VisitedSet
    method: str = "rk4"
    min_eigenvalue: float = 0.0

    def Y_at_node(self, k):
        return MatrixCollection(self.Y[k])

    def gains_at_node(self, k):
        return GainCollection(self.gains[k])

    @property
    def Y0(self):
        return MatrixCollection(self.Y[0])


def input_weight_inverse(R):
    """Inverse of every ``R_i`` via Cholesky; ``R`` has shape (..., N, m, m)."""
    R = np.asarray(R, dtype=float)
    out = np.empty_like(R)
    eye = np.eye(R.shape[-1])
    for idx in np.ndindex(*R.shape[:-2]):
        try:
            out[idx] = cho_solve(cho_factor(R[idx]), eye)
        except np.linalg.LinAlgError:
            raise FactorizationError(idx[-1]) from None
    return out


def solve_riccati(problem, grid=None, method="rk4", *, restrict=True, use_numba=None):
    """Integrate the coupled Riccati system backward on ``grid``.

    Parameters
    ----------
    problem : ProblemInstance
    grid : TimeGrid, optional
        Defaults to step 1e-3 over the problem horizon.
    method : {"rk4", "backward_euler"}
        ``backward_euler`` is the explicit Euler step taken backward in time
        from ``t_{k+1}`` to ``t_k``.
    restrict : bool
        If False, integrate every mode with the full coupling (the classical
        system) instead of only the visited ones.

    Returns
    -------
    RiccatiSolution
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    grid = grid or TimeGrid.from_step(problem.horizon)
    if abs(grid.horizon - problem.horizon) > 1e-12 * max(1.0, problem.horizon):
        raise ValueError(f"grid horizon {grid.horizon} != problem horizon {problem.horizon}")
    N = problem.num_modes
    Z = visited_states(problem.generator, problem.phi) if restrict else VisitedSet.full(N)

    A, B, Q, R = problem.coefficients(grid.num_steps)
    Rinv = input_weight_inverse(R)
    S = B @ Rinv @ B.swapaxes(-1, -2)

    Y, bad = _kernels.riccati_integrate(
        A, S, Q, problem.Q_terminal, problem.generator, np.array(Z.members),
        grid.step, grid.num_steps, rk4=(method == "rk4"), use_numba=use_numba,
    )
    if bad >= 0:
        raise DivergenceError(bad * grid.step)

    gains = -(Rinv @ B.swapaxes(-1, -2)) @ Y
    if not Z.is_full():
        gains[:, list(Z.complement)] = 0.0

    lo = float(min_eigenvalues(Y[:, list(Z.members)]).min())
    if lo < -TOL_PSD:
        warnings.warn(f"Riccati solution lost positive semidefiniteness (min eigenvalue {lo:.3g})")
    Y.setflags(write=False)
    gains.setflags(write=False)
    return RiccatiSolution(grid, Y, gains, Z, method, lo)


def gain_at(solution, t, mode):
    """Gain of ``mode`` at the last grid node not exceeding ``t``."""
    return solution.gains[solution.grid.index_at(t), mode]


def optimal_cost(solution, X0):
    """Optimal cost ``sum_{i in Z} tr(Y_i(0) X_i(0))``."""
    X0 = np.asarray(X0, dtype=float)
    Z = solution.visited
    off = list(Z.complement)
    if off and np.max(np.abs(X0[off])) > TOL_ZERO:
        raise SubspaceError(f"initial moments nonzero outside visited modes {Z.one_based()}")
    idx = list(Z.members)
    return float(np.einsum("ijk,ijk->", solution.Y[0, idx], X0[idx]))
