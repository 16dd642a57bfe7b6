import numpy as np
import pytest

ACCEPTANCE_RESULTS: dict = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        verdict, title = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"AC{key:>2} {verdict}: {title}")
