import numpy as np
import pytest

from ctwkb import TrajectoryEngine, WavepacketSpec, free, harmonic, quartic_double_well
from ctwkb.engine import StepperConfig, layout_for


@pytest.fixture(scope="session")
def paper_spec():
    return WavepacketSpec(alpha0=1.0, xc=0.0, pc=5.0)


@pytest.fixture(scope="session")
def quartic():
    return quartic_double_well()


def make_engine(spec, potential, order=1, **stepper):
    return TrajectoryEngine(spec, potential, layout_for(spec, order), StepperConfig(**stepper))


@pytest.fixture(scope="session")
def quartic_engine(paper_spec, quartic):
    return make_engine(paper_spec, quartic, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


POTENTIALS = {"free": free(), "harmonic": harmonic(), "quartic": quartic_double_well()}


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
