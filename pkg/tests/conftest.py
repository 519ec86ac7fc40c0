import numpy as np
import pytest

from unseen_prune import data

ACCEPTANCE_LINES = []


@pytest.fixture
def two_blobs():
    spec = data.SyntheticSpec(centers=[[-1.0, 0.0], [1.0, 0.0]], spreads=0.1,
                              samples_per_class=50, seed=3)
    return data.generate_synthetic(spec)[0]


@pytest.fixture
def small_mixture():
    spec = data.mixture_spec(4, 5, [0.4, 0.6, 0.8, 1.0], 30, separation=1.5,
                             label_noise_rate=0.05, seed=11, center_seed=5)
    return data.generate_synthetic(spec)[0]


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
