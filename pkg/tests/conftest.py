import random

import pytest

from demoproof.gridworld import (
    ScenarioConfig,
    ScenarioRanges,
    build_pomdp,
    random_scenario,
)
from demoproof.training import run_episode, training_set_from


@pytest.fixture(scope="session")
def quad_config():
    """The fixed 4x4 scenario used across the refinement and heatmap tests."""
    return ScenarioConfig(width=4, height=4, landmarks=frozenset({(1, 2)}),
                          obstacle_start=(2, 0), goal=(3, 3),
                          agent_start=(0, 0), rng_seed=7)


@pytest.fixture(scope="session")
def quad_model(quad_config):
    return build_pomdp(quad_config)


@pytest.fixture(scope="session")
def family_training_set():
    """Training data collected across a random scenario family, the normal
    protocol before cloning a strategy for one concrete scenario."""
    rng = random.Random(5)
    trajectories = []
    for i in range(40):
        scenario = random_scenario(rng, ScenarioRanges(width=(4, 6), height=(4, 6)))
        trajectories.append(run_episode(scenario, seed=10_000 + i, noise=0.1))
    return training_set_from(trajectories)
