"""Data models for grid-world exploration."""

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Dict, List, Optional, Tuple

import numpy as np

from exceptions import ConfigError

Cell = Tuple[int, int]

# Sentinel colour for cells outside the environment bounds.
OUT_OF_BOUNDS_COLOR = (127, 127, 127)


class Heading(IntEnum):
    """Head direction; NORTH points toward decreasing row index."""
    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3

    @property
    def drow(self) -> int:
        return (-1, 0, 1, 0)[self.value]

    @property
    def dcol(self) -> int:
        return (0, 1, 0, -1)[self.value]


class Action(IntEnum):
    """Translation actions; a move also sets the heading."""
    MOVE_N = 0
    MOVE_E = 1
    MOVE_S = 2
    MOVE_W = 3

    @property
    def heading(self) -> Heading:
        return Heading(self.value)

    @classmethod
    def toward(cls, heading: Heading) -> 'Action':
        return cls(int(heading))


class Occupancy(IntEnum):
    """Ternary occupancy of a local map cell."""
    UNKNOWN = 0
    EMPTY = 1
    OCCUPIED = 2


class AgentKind(str, Enum):
    """Decision policies the harness can run."""
    FARMAP = "farmap"
    FRONTIER = "frontier"
    RANDOM_EXPLORE = "random"
    FARMAP_RANDOM_FRAG = "farmap-randfrag"
    FARMAP_UNIFORM_FRAG = "farmap-unifrag"


class StepEvent(str, Enum):
    """Event tag recorded for a step."""
    NONE = ""
    FRAGMENT = "fragment"
    RECALL = "recall"
    REPLAN = "replan"
    DONE = "done"


@dataclass
class GenParams:
    """Procedural generation parameters."""
    S: int = 5
    N: int = 4
    M: int = 4
    L: int = 2
    K: int = 5
    p_connect: float = 0.25
    p_merge: float = 0.25
    p_flip: float = 0.05
    scale: int = 3
    min_submap_size: Optional[int] = None

    @property
    def min_size(self) -> int:
        if self.min_submap_size is None:
            return 3 * self.S * self.S
        return self.min_submap_size

    def validate(self):
        """Raise ConfigError if any parameter is out of range."""
        if self.S < 2:
            raise ConfigError("S must be at least 2")
        if self.N < 1 or self.M < 1:
            raise ConfigError("N and M must be positive")
        if self.L < 1:
            raise ConfigError("L must be at least 1")
        if self.K < 0:
            raise ConfigError("K cannot be negative")
        for name in ("p_connect", "p_merge", "p_flip"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if self.scale < 1:
            raise ConfigError("scale must be at least 1")

    def to_dict(self) -> Dict[str, object]:
        return {
            "S": self.S, "N": self.N, "M": self.M, "L": self.L, "K": self.K,
            "p_connect": self.p_connect, "p_merge": self.p_merge,
            "p_flip": self.p_flip, "scale": self.scale,
            "min_submap_size": self.min_submap_size,
        }


@dataclass
class Pose:
    """Agent position (x = column, y = row) and heading."""
    x: int
    y: int
    heading: Heading = Heading.NORTH


@dataclass
class GridEnvironment:
    """Ground-truth coloured occupancy grid."""
    occupied: np.ndarray
    colors: np.ndarray
    dynamic: bool = False
    gen_params: Optional[GenParams] = None
    seed: int = 0
    name: str = ""

    @property
    def height(self) -> int:
        return int(self.occupied.shape[0])

    @property
    def width(self) -> int:
        return int(self.occupied.shape[1])

    @property
    def size(self) -> int:
        """Bounding-box area, the denominator of the memory ratio."""
        return self.width * self.height

    @property
    def empty_count(self) -> int:
        return int(self.width * self.height - np.count_nonzero(self.occupied))

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def is_occupied(self, x: int, y: int) -> bool:
        if not self.in_bounds(x, y):
            return True
        return bool(self.occupied[y, x])

    def copy(self) -> 'GridEnvironment':
        return GridEnvironment(
            occupied=self.occupied.copy(),
            colors=self.colors.copy(),
            dynamic=self.dynamic,
            gen_params=self.gen_params,
            seed=self.seed,
            name=self.name,
        )


@dataclass
class Observation:
    """Egocentric window, heading-up, agent at the centre cell."""
    color: np.ndarray
    occupancy: np.ndarray
    visibility: np.ndarray
    pose_at_capture: Pose

    @property
    def h(self) -> int:
        return int(self.visibility.shape[0])

    @property
    def w(self) -> int:
        return int(self.visibility.shape[1])


@dataclass
class FrontierEdge:
    """A connected group of frontier cells."""
    cells: np.ndarray
    centroid: Tuple[float, float]

    @property
    def size(self) -> int:
        return int(len(self.cells))


@dataclass
class FracturePoint:
    """Cell where a fragmentation happened, plus its recall border."""
    id: int
    pos: Cell
    border: List[Cell]
    neighbor_fragment: int
    distances_to_other_fps: Dict[int, int] = field(default_factory=dict)


@dataclass
class Plan:
    """Action sequence from the agent to a goal cell."""
    actions: List[Action]
    goal: Cell
    cost: int
    path: List[Cell] = field(default_factory=list)


@dataclass
class StepRecord:
    """Per-step metrics row."""
    step: int
    coverage_pct: float
    stm_cells: int
    fragments: int
    surprisal: float
    z: float
    event: str
    elapsed_ns: int


@dataclass
class EpisodeSummary:
    """Per-episode summary row."""
    env: str
    size_band: str
    agent: str
    seed: int
    coverage_pct: float
    peak_mem_pct: float
    time_s: float
    frag_count: int
    recall_count: int
