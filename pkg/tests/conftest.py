import warnings

import numpy as np
import pytest

from governor.control import ControllerParams


@pytest.fixture
def params() -> ControllerParams:
    """k = kg = 1, zeta = 2 sqrt 2, c1 = 1, c2 = 4."""
    return ControllerParams()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240517)


@pytest.fixture(autouse=True)
def suppress_unraisable_warnings():
    """Suppress RuntimeWarning and PytestUnraisableExceptionWarning during tests."""
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", category=RuntimeWarning, message="coroutine.*was never awaited")
        warnings.filterwarnings("ignore", category=pytest.PytestUnraisableExceptionWarning)
        yield
