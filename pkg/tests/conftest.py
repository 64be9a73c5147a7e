import numpy as np
import pytest

from cclinf.frames import euclidean, grushin, heisenberg

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["euclidean2", "heisenberg", "grushin"])
def builtin_frame(request):
    return {"euclidean2": euclidean(2), "heisenberg": heisenberg(), "grushin": grushin()}[request.param]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
