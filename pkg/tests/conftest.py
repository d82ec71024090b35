import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lrpmix.model import ModelParams, from_edges, sample_graph

settings.register_profile(
    "lrpmix", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("lrpmix")


@pytest.fixture
def cycle():
    """Pure cycle of a given size (beta = 0 parameters attached)."""

    def make(n):
        return from_edges(n, [], ModelParams(n, 1.5, 0.0, 0))

    return make


@pytest.fixture
def lrp():
    def make(n, s=1.5, beta=1.0, seed=0):
        return sample_graph(ModelParams(n, s, beta, seed))

    return make


def dense_P(graph):
    A = graph.to_scipy().toarray().astype(float)
    return 0.5 * np.eye(graph.n) + 0.5 * A / graph.degree[:, None]


ACCEPT_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPT_LINES):
            terminalreporter.write_line(line)
