"""
Local Map (short-term memory)
-----------------------------
The agent's growing predictive map: colour, ternary occupancy and a
confidence channel updated as a decaying trace of visibility.

Map coordinates are (row, col) indices into the arrays. North is row - 1.
Cells just outside the map bounds read as UNKNOWN, so a known EMPTY cell on
the map edge produces a frontier one cell outside the map.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from exceptions import MapShapeError
from models import Cell, FracturePoint, FrontierEdge, Heading, Observation, Occupancy

logger = logging.getLogger(__name__)

CONFIDENCE_FLOOR = 1e-12
EIGHT_CONNECTIVITY = np.ones((3, 3), dtype=bool)


@dataclass
class RunningStats:
    """Online mean and population variance (Welford)."""
    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @property
    def std(self) -> float:
        if self.n < 1:
            return 0.0
        return math.sqrt(self.m2 / self.n)

    def zscore(self, value: float) -> float:
        """z of a new sample against the current statistics; 0 when undefined."""
        sigma = self.std
        if self.n < 2 or sigma == 0.0:
            return 0.0
        return (value - self.mean) / sigma

    def push(self, value: float):
        self.n += 1
        delta = value - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (value - self.mean)

    def copy(self) -> 'RunningStats':
        return RunningStats(self.n, self.mean, self.m2)


def update_stats(stats: RunningStats, s_t: float) -> Tuple[RunningStats, float]:
    """z-score s_t against the old statistics, then fold it in."""
    z = stats.zscore(s_t)
    updated = stats.copy()
    updated.push(s_t)
    return updated, z


@dataclass
class Growth:
    """Rows/columns added on each side of a map."""
    top: int = 0
    bottom: int = 0
    left: int = 0
    right: int = 0

    @property
    def any(self) -> bool:
        return bool(self.top or self.bottom or self.left or self.right)


@dataclass
class ObservationLayers:
    """An observation rotated and zero-padded to the map bounds."""
    color: np.ndarray
    occupancy: np.ndarray
    visibility: np.ndarray

    @classmethod
    def empty(cls, H: int, W: int) -> 'ObservationLayers':
        return cls(
            color=np.zeros((H, W, 3), dtype=np.uint8),
            occupancy=np.zeros((H, W), dtype=np.int8),
            visibility=np.zeros((H, W), dtype=bool),
        )


@dataclass
class LocalMap:
    """A fragment's predictive map."""
    confidence: np.ndarray
    color: np.ndarray
    occupancy: np.ndarray
    agent_pos: Cell
    heading: Heading
    origin: Cell = (0, 0)
    fracture_points: List[FracturePoint] = field(default_factory=list)
    stats: RunningStats = field(default_factory=RunningStats)
    created_at: int = 0
    fragment_id: int = 0

    @classmethod
    def blank(
        cls,
        H: int,
        W: int,
        agent_pos: Cell,
        heading: Heading,
        fragment_id: int = 0,
        created_at: int = 0
    ) -> 'LocalMap':
        return cls(
            confidence=np.zeros((H, W), dtype=np.float64),
            color=np.zeros((H, W, 3), dtype=np.uint8),
            occupancy=np.zeros((H, W), dtype=np.int8),
            agent_pos=agent_pos,
            heading=heading,
            created_at=created_at,
            fragment_id=fragment_id,
        )

    @property
    def H(self) -> int:
        return int(self.confidence.shape[0])

    @property
    def W(self) -> int:
        return int(self.confidence.shape[1])

    @property
    def cells(self) -> int:
        """Memory footprint H x W."""
        return self.H * self.W

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.H and 0 <= cell[1] < self.W

    def occupancy_at(self, cell: Cell) -> Occupancy:
        if not self.in_bounds(cell):
            return Occupancy.UNKNOWN
        return Occupancy(int(self.occupancy[cell]))

    def is_known_empty(self, cell: Cell) -> bool:
        return self.occupancy_at(cell) == Occupancy.EMPTY

    def grow(self, growth: Growth):
        """Zero-pad every channel and shift all stored map coordinates."""
        if not growth.any:
            return
        rows = (growth.top, growth.bottom)
        cols = (growth.left, growth.right)
        self.confidence = np.pad(self.confidence, (rows, cols))
        self.color = np.pad(self.color, (rows, cols, (0, 0)))
        self.occupancy = np.pad(self.occupancy, (rows, cols))

        dr, dc = growth.top, growth.left
        self.agent_pos = (self.agent_pos[0] + dr, self.agent_pos[1] + dc)
        self.origin = (self.origin[0] + dr, self.origin[1] + dc)
        for fp in self.fracture_points:
            fp.pos = (fp.pos[0] + dr, fp.pos[1] + dc)
            fp.border = [(r + dr, c + dc) for r, c in fp.border]

    def ensure_contains(self, cell: Cell) -> Growth:
        """Grow just enough for cell to be inside; returns the growth applied."""
        r, c = cell
        growth = Growth(
            top=max(0, -r),
            bottom=max(0, r - self.H + 1),
            left=max(0, -c),
            right=max(0, c - self.W + 1),
        )
        self.grow(growth)
        return growth

    def fracture_point_at(self, cell: Cell) -> Optional[FracturePoint]:
        """First fracture point whose border contains cell."""
        for fp in self.fracture_points:
            if cell in fp.border:
                return fp
        return None

    def find_fracture_point(self, fp_id: int) -> Optional[FracturePoint]:
        for fp in self.fracture_points:
            if fp.id == fp_id:
                return fp
        return None

    def copy(self) -> 'LocalMap':
        return LocalMap(
            confidence=self.confidence.copy(),
            color=self.color.copy(),
            occupancy=self.occupancy.copy(),
            agent_pos=self.agent_pos,
            heading=self.heading,
            origin=self.origin,
            fracture_points=[
                FracturePoint(
                    id=fp.id,
                    pos=fp.pos,
                    border=list(fp.border),
                    neighbor_fragment=fp.neighbor_fragment,
                    distances_to_other_fps=dict(fp.distances_to_other_fps),
                )
                for fp in self.fracture_points
            ],
            stats=self.stats.copy(),
            created_at=self.created_at,
            fragment_id=self.fragment_id,
        )


def rotate_to_map(obs: Observation, heading: Heading) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rotate heading-up observation layers so that window-up is map north."""
    k = (-int(heading)) % 4
    return (
        np.rot90(obs.color, k, axes=(0, 1)),
        np.rot90(obs.occupancy, k),
        np.rot90(obs.visibility, k),
    )


def blank_for_observation(
    obs: Observation,
    heading: Heading,
    fragment_id: int = 0,
    created_at: int = 0
) -> LocalMap:
    """Empty map exactly the size of the rotated window, agent at its centre."""
    hh, ww = (obs.h, obs.w) if heading in (Heading.NORTH, Heading.SOUTH) else (obs.w, obs.h)
    return LocalMap.blank(hh, ww, (hh // 2, ww // 2), heading, fragment_id, created_at)


def transform_observation(obs: Observation, local_map: LocalMap) -> Tuple[ObservationLayers, Growth]:
    """
    Align an observation with the map.

    Rotates the window to map north and embeds it at the agent's map
    position. Returns layers sized to the grown bounds and the growth the
    map needs on each side for the window to fit.
    """
    color, occupancy, visibility = rotate_to_map(obs, local_map.heading)
    hh, ww = visibility.shape
    ar, ac = local_map.agent_pos
    top, left = ar - hh // 2, ac - ww // 2

    growth = Growth(
        top=max(0, -top),
        bottom=max(0, top + hh - local_map.H),
        left=max(0, -left),
        right=max(0, left + ww - local_map.W),
    )
    H = local_map.H + growth.top + growth.bottom
    W = local_map.W + growth.left + growth.right
    top += growth.top
    left += growth.left

    layers = ObservationLayers.empty(H, W)
    window = (slice(top, top + hh), slice(left, left + ww))
    layers.visibility[window] = visibility
    layers.color[window] = color
    layers.occupancy[window] = np.where(
        visibility,
        np.where(occupancy, Occupancy.OCCUPIED, Occupancy.EMPTY),
        Occupancy.UNKNOWN,
    ).astype(np.int8)
    return layers, growth


def new_local_map(
    obs: Observation,
    gamma: float,
    fragment_id: int = 0,
    step: int = 0,
    forget_below_floor: bool = False
) -> LocalMap:
    """A fresh map holding exactly one observation."""
    local_map = blank_for_observation(obs, obs.pose_at_capture.heading, fragment_id, step)
    layers, _ = transform_observation(obs, local_map)
    return update_map(local_map, layers, gamma, forget_below_floor)


def update_map(
    local_map: LocalMap,
    layers: ObservationLayers,
    gamma: float,
    forget_below_floor: bool = False
) -> LocalMap:
    """
    Decaying-trace update of the confidence channel, overwrite of colour and
    occupancy on visible cells. Mutates and returns the map.

    Raises:
        MapShapeError: If the layers do not match the map bounds
    """
    if layers.visibility.shape != local_map.confidence.shape:
        raise MapShapeError(
            f"Observation layers {layers.visibility.shape} do not match map "
            f"{local_map.confidence.shape}"
        )

    visible = layers.visibility
    confidence = gamma * local_map.confidence + (1.0 - gamma) * visible
    local_map.color[visible] = layers.color[visible]
    local_map.occupancy[visible] = layers.occupancy[visible]

    fading = (confidence < CONFIDENCE_FLOOR) & (local_map.occupancy != Occupancy.UNKNOWN)
    if forget_below_floor:
        confidence[fading] = 0.0
        local_map.occupancy[fading] = Occupancy.UNKNOWN
    else:
        confidence[fading] = CONFIDENCE_FLOOR

    local_map.confidence = confidence
    return local_map


def surprisal(map_before: LocalMap, layers: ObservationLayers) -> float:
    """1 minus the mean prior confidence over the visible cells."""
    visible = layers.visibility
    count = int(np.count_nonzero(visible))
    if count == 0:
        raise MapShapeError("Surprisal needs at least one visible cell")
    if visible.shape != map_before.confidence.shape:
        raise MapShapeError("Observation layers do not match map bounds")
    c_t = float(map_before.confidence[visible].sum()) / count
    return min(1.0, max(0.0, 1.0 - c_t))


def frontier_mask(local_map: LocalMap) -> np.ndarray:
    """
    Frontier cells on the map padded by one UNKNOWN ring.

    Index (r + 1, c + 1) of the result is map cell (r, c).
    """
    padded = np.pad(local_map.occupancy, 1, constant_values=Occupancy.UNKNOWN)
    empty = padded == Occupancy.EMPTY
    near_empty = np.zeros_like(empty)
    near_empty[1:, :] |= empty[:-1, :]
    near_empty[:-1, :] |= empty[1:, :]
    near_empty[:, 1:] |= empty[:, :-1]
    near_empty[:, :-1] |= empty[:, 1:]
    return (padded == Occupancy.UNKNOWN) & near_empty


def detect_frontiers(local_map: LocalMap) -> List[FrontierEdge]:
    """Frontier edges: 8-connected groups of frontier cells, in label order."""
    mask = frontier_mask(local_map)
    labels, count = ndimage.label(mask, structure=EIGHT_CONNECTIVITY)
    if count == 0:
        return []

    cells = np.argwhere(mask) - 1
    cell_labels = labels[mask]
    order = np.argsort(cell_labels, kind="stable")
    sizes = np.bincount(cell_labels, minlength=count + 1)[1:]
    groups = np.split(cells[order], np.cumsum(sizes)[:-1])

    edges = []
    for group in groups:
        centroid = group.mean(axis=0)
        edges.append(FrontierEdge(cells=group, centroid=(float(centroid[0]), float(centroid[1]))))
    return edges


def discovery_ratio(local_map: LocalMap) -> float:
    """Frontier cell count over known cell count; 0 for an empty map."""
    known = int(np.count_nonzero(local_map.occupancy != Occupancy.UNKNOWN))
    if known == 0:
        return 0.0
    return int(np.count_nonzero(frontier_mask(local_map))) / known
