import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.linalg import expm

from mjls_lqr import TimeGrid, mode_probabilities, sample_path, validate_generator, visited_states
from mjls_lqr.chain import _jump_tables, _sample_path, path_rng
from mjls_lqr.errors import InvalidDistributionError

from conftest import random_generator

EX3_LAMBDA = np.array([[-1.0, 1.0, 0, 0], [0.5, -0.5, 0, 0], [0, 0, -1.5, 1.5], [0, 0, 1.0, -1.0]])


def test_zero_generator_ok():
    d = validate_generator(np.zeros((3, 3)))
    assert d.ok and d.absorbing == (0, 1, 2)


def test_ex4_generator_absorbing(ex4):
    d = validate_generator(ex4.generator)
    assert d.ok
    assert d.absorbing == (3,)


def test_row_sum_diagnostic():
    d = validate_generator([[-1.0, 0.5], [1.0, -1.0]])
    assert not d.ok
    assert [i for i, _ in d.row_sums] == [0]
    assert d.messages() == ["row 1 sums to -0.5"]


def test_negative_rate_diagnostic():
    d = validate_generator([[1.0, -1.0], [0.0, 0.0]])
    assert not d.ok and d.negative_rates == ((0, 1, -1.0),)


def test_non_finite_does_not_raise():
    assert not validate_generator([[np.nan, 0.0], [0.0, 0.0]]).ok


def test_visited_irreducible():
    lam = np.array([[-2, 1, 1], [1, -3, 2], [1.5, 0.5, -2.0]])
    assert visited_states(lam, [0.2, 0.3, 0.5]).members == (0, 1, 2)


def test_visited_ex3_classes():
    assert visited_states(EX3_LAMBDA, [0.7, 0.3, 0, 0]).members == (0, 1)
    assert visited_states(EX3_LAMBDA, [0, 0, 0.6, 0.4]).members == (2, 3)


def test_visited_ex4(ex4):
    assert visited_states(ex4.generator, ex4.phi).members == (0, 1, 2, 3)
    # starting in the absorbing mode never leaves it
    assert visited_states(ex4.generator, [0, 0, 0, 1.0]).members == (3,)


def test_visited_transient_chain():
    lam = np.array([[-1.0, 1.0, 0.0], [0.0, -2.0, 2.0], [0.0, 0.0, 0.0]])
    assert visited_states(lam, [0, 1.0, 0]).members == (1, 2)


def test_visited_rejects_zero_phi():
    with pytest.raises(InvalidDistributionError):
        visited_states(EX3_LAMBDA, np.zeros(4))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 7), st.integers(0, 2**32 - 1), st.data())
def test_visited_closed_and_monotone(N, seed, data):
    rng = np.random.default_rng(seed)
    lam = random_generator(rng, N, density=0.3)
    s1 = data.draw(st.sets(st.integers(0, N - 1), min_size=1))
    s2 = s1 | data.draw(st.sets(st.integers(0, N - 1)))
    phi1 = np.zeros(N)
    phi1[list(s1)] = 1.0 / len(s1)
    phi2 = np.zeros(N)
    phi2[list(s2)] = 1.0 / len(s2)
    Z1 = visited_states(lam, phi1)
    Z2 = visited_states(lam, phi2)
    assert set(Z1) <= set(Z2)
    for i in Z1:
        for j in range(N):
            if i != j and lam[i, j] > 0:
                assert j in Z1
    # the ODE flow never puts mass outside Z
    pi = mode_probabilities(lam, phi1, TimeGrid(2.0, 200)).values
    off = list(Z1.complement)
    if off:
        assert np.max(pi[:, off]) <= 1e-12


def test_mode_probabilities_frozen_chain():
    pi = mode_probabilities(np.zeros((3, 3)), [0.2, 0.3, 0.5], TimeGrid(1.0, 10)).values
    np.testing.assert_array_equal(pi, np.tile([0.2, 0.3, 0.5], (11, 1)))


def test_mode_probabilities_two_state_closed_form():
    grid = TimeGrid(3.0, 3000)
    pi = mode_probabilities([[-1.0, 1.0], [1.0, -1.0]], [1.0, 0.0], grid).values
    t = grid.nodes
    np.testing.assert_allclose(pi[:, 0], 0.5 * (1 + np.exp(-2 * t)), atol=1e-12)
    np.testing.assert_allclose(pi.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("T, p4", [(5.0, 0.94), (10.0, 1.00), (30.0, 1.00)])
def test_ex4_failure_probability(ex4, T, p4):
    grid = TimeGrid.from_step(T)
    pi = mode_probabilities(ex4.generator, ex4.phi, grid).values[-1]
    # matrix exponential oracle
    np.testing.assert_allclose(pi, ex4.phi @ expm(ex4.generator * T), atol=1e-10)
    assert abs(pi[3] - p4) <= 0.005


def test_sample_path_frozen_chain():
    path = sample_path(np.zeros((3, 3)), [0, 1.0, 0], 2.0, 7)
    assert path.segments == ((0.0, 1),)
    assert path.mode_at(1.9) == 1


def test_sample_path_deterministic(ex4):
    a = sample_path(ex4.generator, ex4.phi, 5.0, [42, 3])
    b = sample_path(ex4.generator, ex4.phi, 5.0, [42, 3])
    assert a == b
    assert a != sample_path(ex4.generator, ex4.phi, 5.0, [42, 4])


def test_sample_path_structure(ex4):
    for s in range(200):
        p = sample_path(ex4.generator, ex4.phi, 5.0, s)
        assert p.starts[0] == 0.0 and p.modes[0] == 0
        assert all(np.diff(p.starts) > 0)
        assert all(a != b for a, b in zip(p.modes, p.modes[1:]))
        assert p.starts[-1] < 5.0


def test_sample_path_ex4_failure_fraction(ex4):
    tables = _jump_tables(ex4.generator, ex4.phi)
    n = 100_000
    hits = sum(_sample_path(tables, 5.0, path_rng([2024, p])).modes[-1] == 3 for p in range(n))
    assert abs(hits / n - 0.94) <= 0.01


@pytest.mark.parametrize("a, b", [(1.0, 1.0), (1.0, 3.0)])
def test_mean_jump_count(a, b):
    lam = np.array([[-a, a], [b, -b]])
    T = 1.0
    # expected jumps = integral of the current exit rate
    p1 = lambda t: b / (a + b) + a / (a + b) * np.exp(-(a + b) * t)
    expected, _ = quad(lambda t: a * p1(t) + b * (1 - p1(t)), 0, T)
    tables = _jump_tables(lam, [1.0, 0.0])
    counts = np.array([_sample_path(tables, T, path_rng([5, p])).num_jumps for p in range(20_000)])
    se = counts.std(ddof=1) / np.sqrt(len(counts))
    assert abs(counts.mean() - expected) <= 3 * se


def test_empirical_occupation_matches_kolmogorov(ex4):
    T = 5.0
    grid = TimeGrid.from_step(T, 1e-2)
    pi = mode_probabilities(ex4.generator, ex4.phi, grid)
    tables = _jump_tables(ex4.generator, ex4.phi)
    paths = [_sample_path(tables, T, path_rng([77, p])) for p in range(10_000)]
    Z = visited_states(ex4.generator, ex4.phi)
    for t in (0.5, 1.0, 2.0, 3.5, 5.0):
        modes = np.array([p.mode_at(t) for p in paths])
        for i in range(4):
            freq = np.mean(modes == i)
            p = pi.at(t)[i]
            se = np.sqrt(max(p * (1 - p), 1e-12) / len(paths))
            assert abs(freq - p) <= 3 * se + 1e-12, (t, i)
    assert {m for p in paths for m in p.modes} <= set(Z)


def test_sampled_modes_stay_in_visited():
    phi = [0.0, 0.0, 0.6, 0.4]
    Z = visited_states(EX3_LAMBDA, phi)
    seen = {m for s in range(2000) for m in sample_path(EX3_LAMBDA, phi, 3.0, s).modes}
    assert seen == set(Z)
