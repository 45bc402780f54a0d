"""Shared fixtures: small catalog laminations and their transform settings."""

import numpy as np
import pytest

from persistlam.graph_transform import TransformConfig
from persistlam.models import GridConfig
from persistlam.scenarios import get_scenario


def build(name: str, grid: GridConfig, **params):
    """(scenario, lamination, frames, dynamics, transform config) for a catalog entry."""
    scenario = get_scenario(name, params)
    lam = scenario.build_lamination(grid)
    cfg = TransformConfig(eta=scenario.eta, marked_region=lam.marked_region)
    return scenario, lam, scenario.frames(lam), scenario.dynamics(lam), cfg


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def circle():
    return build("circle", GridConfig(nodes=64))


@pytest.fixture
def doubling():
    return build("doubling", GridConfig(nodes=256))


@pytest.fixture
def solenoid():
    return build("solenoid", GridConfig(nodes=64, depth=4))


@pytest.fixture
def planar_circle():
    return build("planar_circle", GridConfig(nodes=64))
