"""Shared fixtures."""

import logging
from pathlib import Path

import numpy as np
import pytest

from grople.config import config
from grople.dataset import synthetic_dataset

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(autouse=True)
def _detach_log_handlers():
    """CLI runs attach a stderr handler bound to the runner's stream."""
    yield
    package_logger = logging.getLogger("grople")
    for handler in [h for h in package_logger.handlers if getattr(h, "_grople", False)]:
        package_logger.removeHandler(handler)
    package_logger.setLevel(logging.NOTSET)


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def tiny_arff() -> Path:
    return DATA_DIR / "tiny.arff"


@pytest.fixture
def tiny_xml() -> Path:
    return DATA_DIR / "tiny.xml"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def planted():
    """One generating block per label, pushed off the decision boundaries."""
    return synthetic_dataset(n=200, n_features=20, n_labels=8, n_groups=4, seed=3, margin=1.0)


@pytest.fixture(scope="session")
def smoke():
    return synthetic_dataset(n=50, seed=0)


def assert_non_increasing(history, atol_scale: float = 1e-10):
    history = np.asarray(history, dtype=float)
    if history.size < 2:
        return
    slack = atol_scale * (1.0 + abs(history[0]))
    assert np.all(np.diff(history) <= slack), history


requires_mulan = pytest.mark.skipif(not config.DATA_DIR, reason="GROPLE_DATA_DIR not set")
