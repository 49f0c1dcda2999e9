import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))

N = 4096


@pytest.fixture(scope="session")
def grid_x():
    return np.arange(N) / N


_CRITERION_LINES = pytest.StashKey()


@pytest.fixture
def criterion_log(request):
    """Collects acceptance lines so they are shown even when output is captured."""
    return request.config.stash.setdefault(_CRITERION_LINES, {})


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERION_LINES, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for cid in sorted(lines):
            terminalreporter.write_line(lines[cid])
