import sys

import numpy as np
import pytest

from pssgp.ssm import DiscreteModel, TimeGrid


def random_spd(rng, n, scale=1.0, floor=1e-2):
    b = rng.standard_normal((n, n))
    return scale * (b @ b.T / n + floor * np.eye(n))


def random_discrete_model(rng, n_x, n, missing_rate=0.3):
    """A random LGSSM with contractive transitions and arbitrary missing data."""
    k = max(n - 1, 0)
    u = np.linalg.qr(rng.standard_normal((k, n_x, n_x)))[0] if k else np.zeros((0, n_x, n_x))
    rho = rng.uniform(0.5, 0.98, size=(k, 1, 1))
    f = rho * u
    q = np.stack([random_spd(rng, n_x, 0.5) for _ in range(k)]) if k else np.zeros((0, n_x, n_x))
    observed = rng.random(n) >= missing_rate
    grid = TimeGrid(np.arange(n, dtype=float), observed, rng.standard_normal(n),
                    rng.uniform(0.1, 1.0, n))
    return DiscreteModel(F=f.reshape(k, n_x, n_x), Q=q.reshape(k, n_x, n_x),
                         H=rng.standard_normal(n_x), Pinf=random_spd(rng, n_x),
                         grid=grid, D=np.ones(n_x))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
