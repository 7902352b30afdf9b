import pytest

from giesekus_hb.core import ModelParams


@pytest.fixture
def giesekus():
    """Default material: G = 1 Pa, lambda = 1 s, alpha = 0.3."""
    return ModelParams(modulus=1.0, relaxation_time=1.0, alpha=0.3)


@pytest.fixture
def ucm():
    return ModelParams(modulus=1.0, relaxation_time=1.0, alpha=0.0)


ACCEPTANCE_RESULTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[number])
