import numpy as np
import pytest

# one line per acceptance criterion, filled by test_acceptance.py
CRITERIA: dict[str, str] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for key in sorted(CRITERIA, key=lambda k: (len(k), k)):
            terminalreporter.write_line(CRITERIA[key])
