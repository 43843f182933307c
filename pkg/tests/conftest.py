import numpy as np
import pytest

from proxlitho import kernels

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=["compiled", "python"])
def backend(request):
    """Run a test once per kernel backend, restoring the default afterwards."""
    if request.param == "compiled" and kernels._compiled is None:
        pytest.skip("compiled kernels not built")
    before = kernels.BACKEND
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(before)
