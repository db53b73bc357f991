from __future__ import annotations

import numpy as np
import pytest

from dimple.netgen import ModelConfig, build_ground_truth


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow Monte Carlo tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_truth():
    """Three groups of three-dimensional latents, 150 nodes, 120 layers."""
    return build_ground_truth(ModelConfig.uniform(150, 120, 3, 3, b_range=(-0.05, 0.05), seed=7))
