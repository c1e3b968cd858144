import numpy as np
import pytest

from amodflow import fixtures as fx

_REPORT_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_REPORT_KEY] = []


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Collects one status line per acceptance criterion for the terminal summary."""
    return request.config.stash[_REPORT_KEY]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_REPORT_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def parallel():
    return fx.two_parallel_edges()


@pytest.fixture
def cycle():
    return fx.two_vertex_cycle()


@pytest.fixture
def fig2():
    return fx.figure2()


def expected_divergence(vertex_count, requests):
    out = np.zeros(vertex_count)
    for r in requests:
        out[r.origin] += r.intensity
        out[r.destination] -= r.intensity
    return out
