from dataclasses import replace

import numpy as np
import pytest

from mjls_lqr import (
    DeterministicState,
    GaussianState,
    ProblemInstance,
    TimeGrid,
    deterministic_cost,
    estimate_cost,
    initial_moments,
    optimal_cost,
    propagate_moments,
    simulate_path,
    solve_riccati,
    visited_states,
)
from mjls_lqr.errors import ValidationError
from mjls_lqr.montecarlo import path_costs

from conftest import scalar_problem


def _solved(p, n=None):
    grid = TimeGrid(p.horizon, n) if n else TimeGrid.from_step(p.horizon)
    return solve_riccati(p, grid)


def test_terminal_only_cost():
    p = ProblemInstance(
        A=[np.zeros((2, 2))], B=[np.zeros((2, 1))], Q=[np.zeros((2, 2))], R=[[[1.0]]],
        Q_terminal=[np.eye(2)], generator=[[0.0]], phi=[1.0], horizon=1.0,
        initial_state=DeterministicState([1.0, 0.0]),
    )
    res = simulate_path(p, _solved(p, 100), 0)
    assert res.cost == 1.0
    np.testing.assert_array_equal(res.states[-1], [1.0, 0.0])


def test_zero_weights_zero_cost():
    p = scalar_problem(a=0.3, b=1.0, q=0.0, r=1e-9, qT=0.0)
    assert simulate_path(p, _solved(p, 100), 1).cost == 0.0


def test_single_mode_path_equals_moment_cost():
    p = scalar_problem(a=0.5, b=1.0, q=2.0, r=0.5, qT=1.0, T=2.0, x0=1.5)
    sol = _solved(p)
    traj = propagate_moments(p, sol.gains, sol.grid)
    jd = deterministic_cost(traj, sol.gains, p)
    assert simulate_path(p, sol, 3).cost == pytest.approx(jd, rel=1e-9)


def test_deterministic_estimate_has_zero_error():
    p = scalar_problem(a=-0.2, b=1.0, q=1.0, r=1.0, qT=1.0)
    sol = _solved(p, 200)
    est = estimate_cost(p, sol, 50, 9)
    assert est.std_error == 0.0
    assert est.mean == simulate_path(p, sol, [9, 0]).cost
    assert est.confidence95 == (est.mean, est.mean)


def test_rejects_single_path(ex3_phi1):
    with pytest.raises(ValidationError):
        estimate_cost(ex3_phi1, _solved(ex3_phi1), 1)


def test_reproducible(ex4):
    p = replace(ex4, horizon=2.0)
    sol = _solved(p)
    a = estimate_cost(p, sol, 500, 42)
    b = estimate_cost(p, sol, 500, 42)
    assert a == b
    assert a != estimate_cost(p, sol, 500, 43)


def test_simulate_path_reproducible(ex4):
    sol = _solved(ex4)
    a, b = simulate_path(ex4, sol, [1, 2]), simulate_path(ex4, sol, [1, 2])
    assert a.cost == b.cost and a.path == b.path
    np.testing.assert_array_equal(a.states, b.states)


def test_batch_matches_single_paths(ex4):
    p = replace(ex4, horizon=1.0)
    sol = _solved(p)
    costs, _ = path_costs(p, sol, 20, 11)
    single = [simulate_path(p, sol, [11, i]).cost for i in range(20)]
    np.testing.assert_array_equal(costs, single)


def test_numpy_fallback_agrees(ex4):
    p = replace(ex4, horizon=1.0)
    sol = _solved(p)
    a, _ = path_costs(p, sol, 200, 5, use_numba=True)
    b, _ = path_costs(p, sol, 200, 5, use_numba=False)
    np.testing.assert_allclose(a, b, rtol=1e-12)
    s1 = simulate_path(p, sol, 4, use_numba=True)
    s2 = simulate_path(p, sol, 4, use_numba=False)
    np.testing.assert_allclose(s1.states, s2.states, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("name", ["ex3_phi1", "ex3_phi2", "ex4"])
def test_unbiased_and_modes_visited(name, request):
    p = request.getfixturevalue(name)
    sol = _solved(p)
    costs, paths = path_costs(p, sol, 10_000, 42)
    mean, se = costs.mean(), costs.std(ddof=1) / np.sqrt(len(costs))
    j = optimal_cost(sol, initial_moments(p))
    # ex3 has zero path variance (modes in each class share their data), so
    # the grid-discretization floor of the cost identity is added
    assert abs(mean - j) <= 3 * se + 1e-5 * j
    assert {m for path in paths for m in path.modes} <= set(visited_states(p.generator, p.phi))


def test_ex4_mean_matches_table(ex4):
    est = estimate_cost(ex4, _solved(ex4), 10_000, 42)
    assert abs(est.mean - 0.07) <= 0.005


def test_ex3_paths_have_zero_variance(ex3_phi1):
    est = estimate_cost(ex3_phi1, _solved(ex3_phi1), 1000, 1)
    assert est.std_error == 0.0


def test_standard_error_scaling(ex4):
    sol = _solved(ex4)
    small = estimate_cost(ex4, sol, 2_500, 1)
    large = estimate_cost(ex4, sol, 10_000, 2)
    assert 1.6 <= small.std_error / large.std_error <= 2.4


def test_second_moment_matches_simulation(ex3_phi1):
    p = ex3_phi1
    sol = _solved(p)
    traj = propagate_moments(p, sol.gains, sol.grid)
    E = traj.total_second_moment()
    n = 4000
    sq = np.array([np.sum(simulate_path(p, sol, [8, i]).states ** 2, axis=1) for i in range(n)])
    for t in (0.05, 0.1, 0.2, 0.3, 0.5):
        k = sol.grid.index_at(t)
        se = sq[:, k].std(ddof=1) / np.sqrt(n)
        assert abs(sq[:, k].mean() - E[k]) <= 3 * se + 1e-6 * E[k]


def test_gaussian_initial_state(rng):
    N, n = 2, 2
    covs = np.array([[[0.5, 0.1], [0.1, 0.3]], [[0.2, 0.0], [0.0, 0.0]]])  # second is rank deficient
    p = ProblemInstance(
        A=[[[0.0, 1.0], [-1.0, -0.2]], [[-0.5, 0.0], [0.3, 0.1]]],
        B=[[[0.0], [1.0]], [[1.0], [0.0]]],
        Q=[np.eye(2), 2 * np.eye(2)], R=[[[1.0]], [[0.5]]], Q_terminal=[np.eye(2)] * 2,
        generator=[[-1.0, 1.0], [2.0, -2.0]], phi=[0.4, 0.6], horizon=1.0,
        initial_state=GaussianState([1.0, -0.5], covs),
    )
    sol = _solved(p)
    j = optimal_cost(sol, initial_moments(p))
    est = estimate_cost(p, sol, 10_000, 3)
    assert abs(est.mean - j) <= 3 * est.std_error
