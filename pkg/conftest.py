import os

import numpy as np
import pytest

import episode_runner
from env_generator import closed_room, hairpin_maze, open_arena, two_room_world
from local_map import LocalMap, frontier_mask
from models import GridEnvironment, Heading, Occupancy
from path_planner import distance_field
from settings import AgentConfig, HarnessConfig

SLOW = os.getenv("FARMAP_SLOW_TESTS") == "1"


def pytest_collection_modifyitems(config, items):
    if SLOW:
        return
    skip = pytest.mark.skip(reason="set FARMAP_SLOW_TESTS=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def room():
    return closed_room(12, 9, seed=3)


@pytest.fixture
def arena():
    return open_arena(20, seed=1)


@pytest.fixture
def two_rooms():
    return two_room_world(seed=0)


@pytest.fixture
def maze():
    return hairpin_maze(arms=4, arm_length=16, seed=2)


@pytest.fixture
def agent_config():
    return AgentConfig()


@pytest.fixture
def fast_harness():
    return HarnessConfig(bootstrap_samples=500)


def random_partial_map(rng: np.random.Generator, H: int = 12, W: int = 14) -> LocalMap:
    """LocalMap with random ternary occupancy and confidence."""
    local_map = LocalMap.blank(H, W, (H // 2, W // 2), Heading(int(rng.integers(4))))
    local_map.occupancy = rng.choice(
        [Occupancy.UNKNOWN, Occupancy.EMPTY, Occupancy.OCCUPIED], size=(H, W), p=[0.3, 0.5, 0.2]
    ).astype(np.int8)
    known = local_map.occupancy != Occupancy.UNKNOWN
    local_map.confidence = np.where(known, rng.random((H, W)), 0.0)
    local_map.color = rng.integers(0, 256, size=(H, W, 3), dtype=np.uint8)
    local_map.occupancy[local_map.agent_pos] = Occupancy.EMPTY
    return local_map


def random_environment(rng: np.random.Generator, H: int = 16, W: int = 18, density: float = 0.25) -> GridEnvironment:
    occupied = rng.random((H, W)) < density
    occupied[0, :] = occupied[-1, :] = True
    occupied[:, 0] = occupied[:, -1] = True
    colors = np.zeros((H, W, 3), dtype=np.uint8)
    colors[occupied] = rng.integers(0, 256, size=(int(occupied.sum()), 3), dtype=np.uint8)
    return GridEnvironment(occupied=occupied, colors=colors, name="random")


@pytest.fixture
def make_partial_map():
    return random_partial_map


@pytest.fixture
def make_environment():
    return random_environment


@pytest.fixture
def captured_agents(monkeypatch):
    """Agents built by run_episode, in build order."""
    agents = []
    build_agent = episode_runner.build_agent

    def build(config, planner=None):
        agent = build_agent(config, planner)
        agents.append(agent)
        return agent

    monkeypatch.setattr(episode_runner, "build_agent", build)
    return agents


def reachable_frontier_count(local_map: LocalMap) -> int:
    dist = distance_field(local_map, local_map.agent_pos)
    return int(np.count_nonzero(frontier_mask(local_map) & (dist >= 0)))


@pytest.fixture
def count_reachable_frontier():
    return reachable_frontier_count
