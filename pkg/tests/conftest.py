import time

import numpy as np
import pytest

from shearguard.fedsim import SimConfig, generate_shapes_dataset, run_simulation
from shearguard.shearlet_core import build_system, derive_key

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def sym_system():
    return build_system(derive_key(7, 2, [3, 5], "symmetric"), 32, 32)


@pytest.fixture(scope="session")
def trunc_system():
    return build_system(derive_key(7, 2, [3, 5], "truncated"), 32, 32)


@pytest.fixture(scope="session", params=["symmetric", "truncated"])
def system(request):
    return build_system(derive_key(11, 2, [3, 5], request.param), 32, 32)


@pytest.fixture(scope="session")
def shapes():
    return generate_shapes_dataset(20, 32, 32, seed=5)


@pytest.fixture(scope="session")
def full_simulation():
    """The headline federated run: 4 owners x 250 shapes, 20 epochs."""
    start = time.perf_counter()
    report = run_simulation(SimConfig(num_owners=4, samples_per_owner=250, epochs=20,
                                      batch_size=32, learning_rate=0.05, master_seed=0))
    return report, time.perf_counter() - start
