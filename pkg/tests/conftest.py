import numpy as np
import pytest

import polaronmc as pm


@pytest.fixture(scope="session")
def frohlich():
    return pm.make_frohlich()


@pytest.fixture(scope="session")
def trivial():
    return pm.make_trivial()


def rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
