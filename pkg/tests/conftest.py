"""Shared fixtures: bundled model, scenario directory, canonical start state."""

from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from bimanual import robot as rb

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"

Q_START = np.array([
    1.1175935, 0.97185011, -0.40582767, -0.90109207, -0.98417705,
    0.80857751, 0.34552111, 1.78815707, 1.1241858, 0.96379029,
    -0.94589677, 0.60616616, 0.96833525, -0.2010819,
])


def bundled_model_path() -> str:
    return str(resources.files("bimanual.data") / "franka_like.yaml")


@pytest.fixture(scope="session")
def models():
    return rb.load_model(bundled_model_path())


@pytest.fixture(scope="session")
def dual(models):
    return models[0]


@pytest.fixture(scope="session")
def obj(models):
    return models[1]


@pytest.fixture(scope="session")
def q_start():
    return Q_START.copy()


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


def scenario_path(name: str) -> Path:
    return SCENARIO_DIR / f"{name}.yaml"
