# tests/conftest.py
import numpy as np
import pytest

from app.config import SVI_LAB_SLOW
from app.geometry import Box
from app.oracles import CournotGame, CournotOracle
from app.settings_catalog import GAMES


def pytest_collection_modifyitems(config, items):
    if SVI_LAB_SLOW:
        return
    skip = pytest.mark.skip(reason="long stochastic run; set SVI_LAB_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def base_game():
    return CournotGame(**GAMES["cournot5x4"])


@pytest.fixture(scope="session")
def base_oracle(base_game):
    return CournotOracle(base_game)


@pytest.fixture(scope="session")
def base_set(base_game):
    return base_game.feasible_set()


@pytest.fixture
def unit_interval():
    return Box([0.0], [1.0])


@pytest.fixture
def tiny_game():
    # two firms, two nodes, small caps so paths stay cheap
    return CournotGame(firms=2, nodes=2, sigma=1.0, a_lb=9.5, a_ub=10.5, b=0.5, c=1.0, cap=4.0)
