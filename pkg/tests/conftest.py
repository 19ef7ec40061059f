import numpy as np
import pytest

from resilient_ne.builtins import BUILDERS


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def builtin_games():
    return {name: build().game for name, build in BUILDERS.items()}
