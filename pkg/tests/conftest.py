import numpy as np
import pytest

from mjls_lqr import ProblemInstance, DeterministicState
from mjls_lqr.problem_file import bundled_path, load_problem


def bundled(name):
    return load_problem(bundled_path(name)).problem


@pytest.fixture(scope="session")
def ex1():
    return bundled("ex1")


@pytest.fixture(scope="session")
def ex3_phi1():
    return bundled("ex3_phi1")


@pytest.fixture(scope="session")
def ex3_phi2():
    return bundled("ex3_phi2")


@pytest.fixture(scope="session")
def ex4():
    return bundled("ex4")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def scalar_problem(a=0.0, b=0.0, q=1.0, r=1.0, qT=0.0, T=1.0, x0=1.0):
    return ProblemInstance(
        A=[[[a]]], B=[[[b]]], Q=[[[q]]], R=[[[r]]], Q_terminal=[[[qT]]],
        generator=[[0.0]], phi=[1.0], horizon=T,
        initial_state=DeterministicState([x0]),
    )


def random_generator(rng, N, density=0.6):
    lam = rng.uniform(0.1, 2.0, (N, N)) * (rng.random((N, N)) < density)
    np.fill_diagonal(lam, 0.0)
    np.fill_diagonal(lam, -lam.sum(axis=1))
    return lam


# criterion number -> list of (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(criterion, passed, detail):
    ACCEPTANCE.setdefault(criterion, []).append((bool(passed), detail))
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for c in range(1, 11):
        checks = ACCEPTANCE.get(c)
        if not checks:
            tr.write_line(f"criterion {c:2d}: NOT RUN")
            continue
        status = "PASS" if all(ok for ok, _ in checks) else "FAIL"
        tr.write_line(f"criterion {c:2d}: {status}  " + "; ".join(
            d if ok else f"[FAIL] {d}" for ok, d in checks))
