from __future__ import annotations

import numpy as np
import pytest

from hfspin.kernels import coulomb


@pytest.fixture(scope="session")
def pot():
    return coulomb(3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Lines of the acceptance report, repeated in the terminal summary."""
    log = []
    request.config._acceptance_lines = log
    return log


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
