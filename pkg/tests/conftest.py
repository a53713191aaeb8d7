import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pytest

from src.numerics import DEFAULT_JITTER_LEVELS, set_jitter_levels


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo or training tests with reduced replication counts")


@pytest.fixture(autouse=True)
def default_jitter_levels():
    set_jitter_levels(DEFAULT_JITTER_LEVELS)
    yield
    set_jitter_levels(DEFAULT_JITTER_LEVELS)
