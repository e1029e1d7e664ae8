import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from levy_ou.evolution import PeriodicCoefficients
from levy_ou.fourier import FourierSeries
from levy_ou.levy import AtomList, LevyTriple, PowerLawDensity
from levy_ou.solution import Scenario

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def periodic_A():
    """A(t) = -(1 + 0.5 sin 2 pi t)."""
    return FourierSeries(1.0, [[-1.0]], sin=[[[-0.5]]])


def make_scenario(A=-1.0, noise=None, f=None):
    A = A if isinstance(A, FourierSeries) else np.atleast_2d(A)
    coef = PeriodicCoefficients(1.0, A, f, None)
    d = coef.dim
    noise = LevyTriple.gaussian(np.eye(d)) if noise is None else noise
    return Scenario(coef, noise)


@pytest.fixture(scope="session")
def brownian():
    return make_scenario()


@pytest.fixture(scope="session")
def periodic():
    return make_scenario(periodic_A())


@pytest.fixture(scope="session")
def atoms():
    return make_scenario(noise=LevyTriple([0.0], [[0.0]], AtomList([[2.0]], [1.0])))


@pytest.fixture(scope="session")
def power_law():
    return make_scenario(noise=LevyTriple([0.0], [[1.0]], PowerLawDensity(0.2, 0.5, 2.0)))


@pytest.fixture(scope="session")
def mixed_atoms():
    """Brownian plus a small and a large atom (exercises the compensator)."""
    return make_scenario(noise=LevyTriple([0.1], [[0.5]], AtomList([[0.5], [-1.5]], [0.7, 0.3])))


@pytest.fixture(scope="session")
def planar():
    A = FourierSeries(1.0, [[-1.0, 0.3], [0.0, -2.0]], cos=[[[0.2, 0.0], [0.1, 0.0]]])
    noise = LevyTriple([0.0, 0.0], [[1.0, 0.2], [0.2, 0.5]], AtomList([[0.4, -0.2]], [0.5]))
    return make_scenario(A, noise)


@pytest.fixture(scope="session")
def zero_noise():
    return make_scenario(noise=LevyTriple([0.0], [[0.0]]))


def pytest_terminal_summary(terminalreporter):
    import test_acceptance
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(line)
