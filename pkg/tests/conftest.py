import warnings

import numpy as np
import pytest

from pnlf import split, synth_low_rank

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ac3_tensor():
    """The 50x30x14, rank-4, density-0.1 noiseless instance (seed 7)."""
    tensor, truth = synth_low_rank((50, 30, 14), 4, seed=7, noise_sd=0.0, density=0.1)
    return tensor, truth


@pytest.fixture(scope="session")
def ac3_splits(ac3_tensor):
    return split(ac3_tensor[0], (0.6, 0.2, 0.2), 7)


@pytest.fixture
def small_tensor():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tensor, truth = synth_low_rank((20, 10, 5), 4, seed=3, density=0.2)
    return tensor, truth


@pytest.fixture
def gen():
    return np.random.default_rng(12345)
