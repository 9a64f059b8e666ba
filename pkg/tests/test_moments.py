from dataclasses import replace

import numpy as np
import pytest

from mjls_lqr import (
    DeterministicState,
    GaussianState,
    ProblemInstance,
    TimeGrid,
    deterministic_cost,
    initial_moments,
    optimal_cost,
    project,
    propagate_moments,
    solve_riccati,
)
from mjls_lqr.errors import ShapeError

from conftest import scalar_problem


def test_initial_moments_deterministic():
    p = ProblemInstance(
        A=[np.zeros((2, 2))] * 2, B=[np.zeros((2, 1))] * 2, Q=[np.eye(2)] * 2, R=[[[1.0]]] * 2,
        Q_terminal=[np.eye(2)] * 2, generator=np.zeros((2, 2)), phi=[1.0, 0.0], horizon=1.0,
        initial_state=DeterministicState([1.0, 0.0]),
    )
    X = initial_moments(p).entries
    np.testing.assert_array_equal(X[0], [[1, 0], [0, 0]])
    np.testing.assert_array_equal(X[1], 0)


def test_initial_moments_ex3(ex3_phi1):
    X = initial_moments(ex3_phi1).entries
    ones = np.ones((2, 2))
    np.testing.assert_allclose(X[0], 0.7 * ones)
    np.testing.assert_allclose(X[1], 0.3 * ones)
    assert not np.any(X[2:])


def test_initial_moments_gaussian_trace(rng):
    N, n = 3, 3
    covs = []
    for _ in range(N):
        L = rng.normal(size=(n, n))
        covs.append(L @ L.T)
    mean = rng.normal(size=n)
    phi = np.array([0.2, 0.5, 0.3])
    p = ProblemInstance(
        A=np.zeros((N, n, n)), B=np.zeros((N, n, 1)), Q=[np.eye(n)] * N, R=[[[1.0]]] * N,
        Q_terminal=[np.eye(n)] * N, generator=np.zeros((N, N)), phi=phi, horizon=1.0,
        initial_state=GaussianState(mean, covs),
    )
    X = initial_moments(p).entries
    for i in range(N):
        assert np.trace(X[i]) == pytest.approx(phi[i] * (np.trace(covs[i]) + mean @ mean))


def test_static_system_constant_moments():
    p = scalar_problem(a=0.0, b=0.0, q=1.0, T=1.0, x0=2.0)
    grid = TimeGrid(1.0, 100)
    traj = propagate_moments(p, np.zeros((101, 1, 1, 1)), grid)
    np.testing.assert_array_equal(traj.X[:, 0, 0, 0], 4.0)


def test_subspace_invariance(ex3_phi2):
    sol = solve_riccati(ex3_phi2)
    traj = propagate_moments(ex3_phi2, sol.gains, sol.grid)
    assert not np.any(traj.X[:, :2])


@pytest.mark.parametrize("name", ["ex1", "ex3_phi1", "ex3_phi2", "ex4"])
def test_cost_identity_and_psd(name, request):
    p = request.getfixturevalue(name)
    sol = solve_riccati(p)
    traj = propagate_moments(p, sol.gains, sol.grid)
    jd = deterministic_cost(traj, sol.gains, p)
    js = optimal_cost(sol, initial_moments(p))
    assert abs(jd - js) / max(js, 1e-12) <= 1e-3
    idx = list(traj.visited)
    assert np.linalg.eigvalsh(traj.X[:, idx]).min() >= -1e-6


def test_cost_identity_is_second_order(ex3_phi1):
    p = ex3_phi1
    X0 = initial_moments(p)
    errs = []
    for n in (50, 100, 200):
        sol = solve_riccati(p, TimeGrid(p.horizon, n))
        traj = propagate_moments(p, sol.gains, sol.grid)
        errs.append(abs(deterministic_cost(traj, sol.gains, p) - optimal_cost(sol, X0)))
    assert errs[2] < errs[1] < errs[0]
    assert errs[0] / errs[1] > 3.0


def test_value_function_decay(ex4):
    p = replace(ex4, horizon=2.0)
    sol = solve_riccati(p, TimeGrid(2.0, 2000))
    traj = propagate_moments(p, sol.gains, sol.grid)
    h = sol.grid.step
    V = np.einsum("kijl,kijl->k", sol.Y, traj.X)
    A, B, Q, R = (x[0] for x in p.coefficients(sol.grid.num_steps))
    L = sol.gains
    G = Q + L.swapaxes(-1, -2) @ R @ L
    running = np.einsum("kijl,kijl->k", G, traj.X)
    resid = (V[2:] - V[:-2]) / (2 * h) + running[1:-1]
    assert np.max(np.abs(resid)) <= 10 * h * max(1.0, np.max(np.abs(running)))


def test_full_vs_restricted_propagation(ex3_phi1, ex3_phi2):
    for p in (ex3_phi1, ex3_phi2):
        sol = solve_riccati(p)
        a = propagate_moments(p, sol.gains, sol.grid)
        b = propagate_moments(p, sol.gains, sol.grid, restrict=False)
        proj = np.array([project(x, a.visited).entries for x in b.X[::50]])
        assert np.max(np.abs(proj - a.X[::50])) <= 1e-8


def test_zero_weights_zero_cost():
    p = scalar_problem(a=-1.0, b=1.0, q=0.0, r=1e-9, qT=0.0)
    sol = solve_riccati(p, TimeGrid(1.0, 100))
    traj = propagate_moments(p, sol.gains, sol.grid)
    assert deterministic_cost(traj, sol.gains, p) == 0.0


def test_grid_mismatch_rejected(ex3_phi1):
    sol = solve_riccati(ex3_phi1)
    traj = propagate_moments(ex3_phi1, sol.gains, sol.grid)
    with pytest.raises(ShapeError):
        deterministic_cost(traj, sol.gains[::2], ex3_phi1)
    with pytest.raises(ShapeError):
        propagate_moments(ex3_phi1, sol.gains[::2], sol.grid)


def test_numpy_and_numba_paths_agree(ex4):
    sol = solve_riccati(ex4, TimeGrid(5.0, 500))
    a = propagate_moments(ex4, sol.gains, sol.grid, use_numba=True)
    b = propagate_moments(ex4, sol.gains, sol.grid, use_numba=False)
    np.testing.assert_allclose(a.X, b.X, rtol=1e-11, atol=1e-14)
