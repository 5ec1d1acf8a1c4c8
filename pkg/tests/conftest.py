import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qubit_bss import datagen, priors  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def cfg():
    return priors.PriorConfig()


@pytest.fixture(scope="session")
def cfg_k2():
    return priors.PriorConfig(delta_power=2.0)


@pytest.fixture(scope="session")
def cfg_uniform():
    return priors.PriorConfig(delta_family="uniform")


@pytest.fixture(scope="session")
def data500(cfg):
    return datagen.generate(cfg, 0.6, 500, seed=2024)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_domain(n, seed, cfg=None):
    """Sources from the default priors plus couplings uniform on (0.05, 0.95)."""
    s = priors.sample_sources(cfg or priors.PriorConfig(), n, seed)
    v = np.random.default_rng(seed + 1).uniform(0.05, 0.95, size=n)
    return s, v


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
