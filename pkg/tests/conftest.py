import numpy as np
import pytest

from qkdlab import qstate

ACCEPTANCE_LINES = []


def random_state(rng, labels):
    v = rng.normal(size=2 ** len(labels)) + 1j * rng.normal(size=2 ** len(labels))
    return qstate.StateVector(tuple(labels), v / np.linalg.norm(v))


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
