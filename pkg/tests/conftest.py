import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mtbai.model import ModelTensor, two_task_example

settings.register_profile("pkg", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pkg")


@pytest.fixture(scope="session")
def example_model():
    return two_task_example()


def random_in_class(rng, X, G, H, gap=0.02):
    """Random structured model: representation 0 holds every task's best arm."""
    while True:
        mu = rng.uniform(0.05, 0.85, size=(X, G, H))
        for x in range(X):
            h = rng.integers(H)
            mu[x, 0, h] = min(0.95, mu[x].max() + gap + rng.uniform(0, 0.1))
        perm = rng.permutation(G)
        mu = mu[:, perm, :]
        m = ModelTensor(mu)
        flat = mu.reshape(X, -1)
        if all(len(np.unique(row)) == row.size for row in flat):
            return m


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
