import numpy as np
import pytest

from biopsyfusion.phantom import PhantomConfig, generate

ACCEPTANCE_LINES = []

SMALL = PhantomConfig(dims=(64, 64, 64), spacing=(1.2, 1.2, 1.2))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_phantom():
    return generate(SMALL)


@pytest.fixture(scope="session")
def default_phantom():
    return generate(PhantomConfig(seed=2))
