import numpy as np
import pytest
from hypothesis import settings

from blockmark.datasets import synthetic_cover

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def covers():
    """A handful of 512x512 synthetic covers, built once per session."""
    return [synthetic_cover(1000 + i) for i in range(6)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
