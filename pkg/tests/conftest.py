import sys

import pytest

from posorbit.fields import identity_h, power_g
from posorbit.flow import SystemInstance
from posorbit.solver import StartGrid, multistart_solve, newton_periodic
from posorbit.weights import shifted_sine

# z0 of the positive orbit of P1 at lambda = 50, from an independent DOP853 shooting run
P1_ORBIT_Z0 = (0.41251773, 0.53605537)


def make_p1(lam: float = 50.0, offset: float = -0.3) -> SystemInstance:
    return SystemInstance(identity_h(), power_g(3.0), shifted_sine(1.0, offset), lam)


@pytest.fixture(scope="session")
def p1():
    return make_p1()


@pytest.fixture(scope="session")
def p1_orbit(p1):
    return newton_periodic(p1, P1_ORBIT_Z0, tol=1e-10)


@pytest.fixture(scope="session")
def p1_multistart(p1):
    return multistart_solve(p1, StartGrid((0.0, 2.0), (-2.0, 2.0), (16, 16)), tol=1e-10)


@pytest.fixture(scope="session")
def p1_plus_multistart():
    return multistart_solve(make_p1(offset=0.3), StartGrid((0.0, 2.0), (-2.0, 2.0), (16, 16)), tol=1e-10)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
