"""
Grid World
----------
Ground-truth simulation: egocentric partial observation with occlusion,
agent kinematics and wall colour mutation.

Visibility is evaluated in the agent's egocentric frame. For a given window
size and field of view the set of cells each ray crosses never changes, so
it is computed once and cached as a (cells x cells) blocker matrix; one
observation is then a gather plus a single matrix-vector product.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import List, Tuple

import numpy as np

from exceptions import ConfigError, InvalidPoseError
from models import (
    OUT_OF_BOUNDS_COLOR, Action, GridEnvironment, Heading, Observation, Pose,
)

logger = logging.getLogger(__name__)

# Tolerance for the FOV boundary; cells at exactly fov/2 are inside.
_ANGLE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class RayTable:
    """Precomputed FOV mask and ray blockers for one window geometry."""
    h: int
    w: int
    in_fov: np.ndarray
    blockers: np.ndarray


def supercover_cells(dx: int, dy: int) -> List[Tuple[int, int]]:
    """
    Cells touched by the segment from (0, 0) to (dx, dy).

    Cells are unit squares centred on integer points; a cell counts when the
    closed square meets the segment, so passing exactly through a corner
    touches both side cells. Exact rational arithmetic keeps the set
    symmetric under 90 degree rotations.
    """
    cells = set()
    if dx == 0:
        for j in range(min(0, dy), max(0, dy) + 1):
            cells.add((0, j))
        return sorted(cells)

    half = Fraction(1, 2)
    lo, hi = min(0, dx), max(0, dx)
    slope = Fraction(dy, dx)
    for i in range(lo, hi + 1):
        x0 = max(Fraction(i) - half, Fraction(lo))
        x1 = min(Fraction(i) + half, Fraction(hi))
        y0, y1 = slope * x0, slope * x1
        ylo, yhi = min(y0, y1), max(y0, y1)
        for j in range(math.ceil(ylo - half), math.floor(yhi + half) + 1):
            cells.add((i, j))
    return sorted(cells)


def in_field_of_view(forward: int, right: int, fov_deg: float) -> bool:
    """Whether an egocentric offset lies inside the view cone."""
    if forward == 0 and right == 0:
        return True
    angle = math.degrees(math.atan2(abs(right), forward))
    return angle <= fov_deg / 2.0 + _ANGLE_TOLERANCE


@lru_cache(maxsize=32)
def ray_table(h: int, w: int, fov_deg: float) -> RayTable:
    """Build (and cache) the visibility tables for an h x w window."""
    ch, cw = h // 2, w // 2
    in_fov = np.zeros((h, w), dtype=bool)
    blockers = np.zeros((h * w, h * w), dtype=np.float32)

    for row in range(h):
        for col in range(w):
            forward, right = ch - row, col - cw
            in_fov[row, col] = in_field_of_view(forward, right, fov_deg)
            target = row * w + col
            for i, j in supercover_cells(right, forward):
                if (i, j) == (0, 0) or (i, j) == (right, forward):
                    continue
                blockers[target, (ch - j) * w + (cw + i)] = 1.0

    return RayTable(h=h, w=w, in_fov=in_fov, blockers=blockers)


def window_world_coords(pose: Pose, h: int, w: int) -> Tuple[np.ndarray, np.ndarray]:
    """World (x, y) of every window cell for a heading-up window."""
    ch, cw = h // 2, w // 2
    rows, cols = np.mgrid[0:h, 0:w]
    forward = ch - rows
    right = cols - cw
    fdx, fdy = pose.heading.dcol, pose.heading.drow
    rdx, rdy = -fdy, fdx
    xs = pose.x + forward * fdx + right * rdx
    ys = pose.y + forward * fdy + right * rdy
    return xs, ys


def observe(
    env: GridEnvironment,
    pose: Pose,
    fov_deg: float = 130.0,
    h: int = 15,
    w: int = 15
) -> Observation:
    """
    Capture the egocentric observation at a pose.

    Args:
        env: Ground-truth environment
        pose: Agent pose; must sit on an EMPTY cell
        fov_deg: Field of view in degrees, in (0, 360]
        h, w: Odd window dimensions

    Returns:
        Observation: heading-up window with invisible cells zeroed

    Raises:
        InvalidPoseError: If the pose is on an OCCUPIED cell
    """
    if h % 2 == 0 or w % 2 == 0:
        raise ConfigError(f"Observation window must have odd dimensions, got {h}x{w}")
    if not 0.0 < fov_deg <= 360.0:
        raise ConfigError(f"Field of view must lie in (0, 360], got {fov_deg}")
    if env.is_occupied(pose.x, pose.y):
        raise InvalidPoseError(f"Pose ({pose.x}, {pose.y}) is not on an EMPTY cell")

    table = ray_table(h, w, float(fov_deg))
    xs, ys = window_world_coords(pose, h, w)
    inside = (xs >= 0) & (xs < env.width) & (ys >= 0) & (ys < env.height)

    occupancy = np.ones((h, w), dtype=bool)
    occupancy[inside] = env.occupied[ys[inside], xs[inside]]
    color = np.empty((h, w, 3), dtype=np.uint8)
    color[:] = OUT_OF_BOUNDS_COLOR
    color[inside] = env.colors[ys[inside], xs[inside]]

    blocked = (table.blockers @ occupancy.ravel().astype(np.float32)) > 0
    visibility = table.in_fov & ~blocked.reshape(h, w)

    color[~visibility] = 0
    occupancy &= visibility

    return Observation(
        color=color,
        occupancy=occupancy,
        visibility=visibility,
        pose_at_capture=Pose(pose.x, pose.y, pose.heading),
    )


def visible_world_cells(obs: Observation) -> Tuple[np.ndarray, np.ndarray]:
    """World (x, y) of the visible cells, for the coverage recorder."""
    xs, ys = window_world_coords(obs.pose_at_capture, obs.h, obs.w)
    return xs[obs.visibility], ys[obs.visibility]


def apply_action(env: GridEnvironment, pose: Pose, action: Action) -> Pose:
    """Move one cell if the target is EMPTY; the heading always updates."""
    heading = action.heading
    x, y = pose.x + heading.dcol, pose.y + heading.drow
    if env.is_occupied(x, y):
        return Pose(pose.x, pose.y, heading)
    return Pose(x, y, heading)


def recolor_walls(env: GridEnvironment, rng: np.random.Generator) -> GridEnvironment:
    """Give every OCCUPIED cell a fresh i.i.d. uniform RGB colour, in place."""
    walls = env.occupied
    env.colors[walls] = rng.integers(0, 256, size=(int(np.count_nonzero(walls)), 3), dtype=np.uint8)
    env.colors[~walls] = 0
    return env


def mutate_colors(env: GridEnvironment, rng: np.random.Generator) -> GridEnvironment:
    """Per-step wall recolouring for dynamic environments; no-op otherwise."""
    if not env.dynamic:
        return env
    return recolor_walls(env, rng)


def random_empty_pose(env: GridEnvironment, rng: np.random.Generator) -> Pose:
    """Uniformly random EMPTY cell and heading."""
    ys, xs = np.nonzero(~env.occupied)
    if len(xs) == 0:
        raise InvalidPoseError("Environment has no EMPTY cell to spawn on")
    index = int(rng.integers(len(xs)))
    heading = Heading(int(rng.integers(4)))
    return Pose(int(xs[index]), int(ys[index]), heading)
