import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lsmtransfer.core import Graph

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")

# filled by the acceptance module, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_graph(n, p=0.4, seed=0, name=""):
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < p, 1)
    adj = (upper | upper.T).astype(float)
    return Graph(adj, name=name)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
