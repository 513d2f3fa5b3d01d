import numpy as np
import pytest

from epimoreau._kernels import warmup


@pytest.fixture(scope="session", autouse=True)
def _jit_warmup():
    # compile the hot kernels once so per-test timing budgets are honest
    warmup()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
