import numpy as np
import pytest

from entropic_hwi import Grid1D, PotentialSpec, build_generator, gaussian
from entropic_hwi.schrodinger import build_path, solve_ipfp

PAIR = ((-0.2, 0.5), (0.2, 0.55))


def standard_generator(n):
    return build_generator(Grid1D(-8.0, 8.0, n), PotentialSpec.quadratic(1.0))


def gaussian_pair(gen):
    (a0, s0), (a1, s1) = PAIR
    return gaussian(gen.measure, a0, s0), gaussian(gen.measure, a1, s1)


@pytest.fixture(scope="session")
def gen801():
    return standard_generator(801)


@pytest.fixture(scope="session")
def gen201():
    return standard_generator(201)


@pytest.fixture(scope="session")
def pair801(gen801):
    return gaussian_pair(gen801)


@pytest.fixture(scope="session")
def solved801(gen801, pair801):
    r0, r1 = pair801
    sol = solve_ipfp(r0, r1, 0.2, gen801)
    return sol, build_path(sol, 65)


@pytest.fixture(scope="session")
def solved201(gen201):
    r0, r1 = gaussian_pair(gen201)
    sol = solve_ipfp(r0, r1, 0.2, gen201)
    return sol, build_path(sol, 65)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance criteria record one line each; printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
