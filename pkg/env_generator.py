"""
Environment Generator
---------------------
Procedural generation of grid-square maze environments:
square rooms on a grid, random corridors and merges, boundary flipping,
connected-submap extraction, colourisation and upscaling.

Also ships a few hand-made preset maps used by tests and examples.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import ndimage

from models import GenParams, GridEnvironment, Heading, Pose

logger = logging.getLogger(__name__)

FOUR_CONNECTIVITY = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

SIZE_BANDS = ("small", "medium", "large")


def size_band(size: int) -> str:
    """Size group used in summary tables."""
    if size < 5_000:
        return "small"
    if size < 15_000:
        return "medium"
    return "large"


def _square_origin(params: GenParams, a: int, b: int) -> Tuple[int, int]:
    return params.L + a * (params.S + params.L), params.L + b * (params.S + params.L)


def _join_squares(
    grid: np.ndarray,
    params: GenParams,
    rng: np.random.Generator,
    square: Tuple[int, int],
    horizontal: bool
):
    """Connect and/or merge a square with its right (or lower) neighbour."""
    S, L = params.S, params.L
    r0, c0 = _square_origin(params, *square)

    if rng.random() < params.p_connect:
        width = int(rng.integers(1, S))
        # centred on the shared side; (S - width) // 2 keeps it inside the square
        start = (r0 if horizontal else c0) + (S - width) // 2
        if horizontal:
            grid[start:start + width, c0 + S:c0 + S + L] = False
        else:
            grid[r0 + S:r0 + S + L, start:start + width] = False

    if rng.random() < params.p_merge:
        if horizontal:
            grid[r0:r0 + S, c0 + S:c0 + S + L] = False
        else:
            grid[r0 + S:r0 + S + L, c0:c0 + S] = False


def boundary_mask(grid: np.ndarray) -> np.ndarray:
    """Cells with at least one 4-neighbour of the opposite occupancy."""
    mask = np.zeros_like(grid, dtype=bool)
    vertical = grid[1:, :] != grid[:-1, :]
    horizontal = grid[:, 1:] != grid[:, :-1]
    mask[1:, :] |= vertical
    mask[:-1, :] |= vertical
    mask[:, 1:] |= horizontal
    mask[:, :-1] |= horizontal
    return mask


def build_layout(params: GenParams, rng: np.random.Generator) -> np.ndarray:
    """
    Binary layout before splitting: True = OCCUPIED.

    Rooms, then corridors/merges over adjacent pairs in row-major order,
    then K synchronous rounds of boundary flipping.
    """
    S, L, N, M = params.S, params.L, params.N, params.M
    grid = np.ones((N * S + (N + 1) * L, M * S + (M + 1) * L), dtype=bool)

    for a in range(N):
        for b in range(M):
            r0, c0 = _square_origin(params, a, b)
            grid[r0:r0 + S, c0:c0 + S] = False

    for a in range(N):
        for b in range(M):
            if b + 1 < M:
                _join_squares(grid, params, rng, (a, b), horizontal=True)
            if a + 1 < N:
                _join_squares(grid, params, rng, (a, b), horizontal=False)

    for _ in range(params.K):
        flips = boundary_mask(grid) & (rng.random(grid.shape) < params.p_flip)
        grid ^= flips

    return grid


def colorize(occupied: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniform random RGB on occupied cells, zero on empty cells."""
    colors = np.zeros(occupied.shape + (3,), dtype=np.uint8)
    colors[occupied] = rng.integers(0, 256, size=(int(np.count_nonzero(occupied)), 3), dtype=np.uint8)
    return colors


def upscale(array: np.ndarray, factor: int) -> np.ndarray:
    """Nearest-neighbour block replication along the first two axes."""
    if factor == 1:
        return array.copy()
    return np.repeat(np.repeat(array, factor, axis=0), factor, axis=1)


def split_submaps(grid: np.ndarray, min_size: int) -> List[np.ndarray]:
    """
    Isolated EMPTY components with at least min_size cells.

    Each is cropped to its bounding box plus a 1-cell occupied margin; cells
    of other components inside the box become OCCUPIED.
    """
    labels, count = ndimage.label(~grid, structure=FOUR_CONNECTIVITY)
    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    padded = np.pad(labels, 1, constant_values=0)

    submaps = []
    for label in range(1, count + 1):
        if sizes[label] < min_size:
            continue
        rows, cols = np.nonzero(labels == label)
        r0, r1, c0, c1 = rows.min(), rows.max(), cols.min(), cols.max()
        crop = padded[r0:r1 + 3, c0:c1 + 3]
        submaps.append(crop != label)
    return submaps


def generate_environment(params: GenParams, seed: int) -> List[GridEnvironment]:
    """
    Generate every retained submap for (params, seed).

    Args:
        params: Generation parameters
        seed: Random seed; output is deterministic in (params, seed)

    Returns:
        List[GridEnvironment]: retained submaps in label scan order; may be empty
    """
    params.validate()
    rng = np.random.default_rng(seed)

    layout = build_layout(params, rng)
    environments = []
    for index, occupied in enumerate(split_submaps(layout, params.min_size)):
        colors = colorize(occupied, rng)
        environments.append(GridEnvironment(
            occupied=upscale(occupied, params.scale),
            colors=upscale(colors, params.scale),
            dynamic=False,
            gen_params=params,
            seed=seed,
            name=f"map-{seed}-{index:02d}",
        ))

    if not environments:
        logger.warning(f"No submap of {params} passed the size filter (seed {seed})")
    return environments


def sample_generation_params(rng: np.random.Generator) -> GenParams:
    """Draw parameters from the default generation distribution."""
    S = int(rng.integers(3, 8))
    N = int(rng.integers(3, 8))
    return GenParams(
        S=S,
        N=N,
        M=N,
        L=int(rng.integers(1, 4)),
        K=int(rng.integers(0, 11)),
        p_connect=0.25,
        p_merge=0.25,
        p_flip=0.05,
        scale=3,
    )


def generate_suite(
    runs: int,
    seed: int,
    keep_largest: Optional[int] = None,
    band: Optional[str] = None,
    dynamic: bool = False
) -> List[GridEnvironment]:
    """
    Repeated generation with sampled parameters.

    Maps from all runs are pooled, optionally restricted to one size band,
    sorted by size (largest first, ties in generation order) and optionally
    cut to the keep_largest biggest.
    """
    run_seeds = np.random.SeedSequence(seed).generate_state(runs, dtype=np.uint64)
    pool = []
    for index, run_seed in enumerate(run_seeds):
        run_seed = int(run_seed)
        params = sample_generation_params(np.random.default_rng([run_seed, 1]))
        for sub, env in enumerate(generate_environment(params, run_seed)):
            env.name = f"run{index:04d}-{sub:02d}"
            env.dynamic = dynamic
            pool.append(env)

    if band is not None:
        pool = [env for env in pool if size_band(env.size) == band]
    pool.sort(key=lambda env: -env.size)
    if keep_largest is not None:
        pool = pool[:keep_largest]

    logger.info(f"Generated {len(pool)} maps from {runs} runs (seed {seed})")
    return pool


@dataclass
class PresetMap:
    """Hand-made environment with a suggested start pose."""
    env: GridEnvironment
    start: Pose
    landmarks: Dict[str, Tuple[int, int]] = field(default_factory=dict)


def _preset(occupied: np.ndarray, name: str, seed: int) -> GridEnvironment:
    return GridEnvironment(
        occupied=occupied,
        colors=colorize(occupied, np.random.default_rng(seed)),
        name=name,
        seed=seed,
    )


def closed_room(width: int, height: int, seed: int = 0) -> PresetMap:
    """A width x height empty room surrounded by a 1-cell wall."""
    occupied = np.ones((height + 2, width + 2), dtype=bool)
    occupied[1:-1, 1:-1] = False
    start = Pose(1 + width // 2, 1 + height // 2, Heading.NORTH)
    return PresetMap(_preset(occupied, f"room-{width}x{height}", seed), start)


def open_arena(side: int, seed: int = 0) -> PresetMap:
    """Square open arena; the agent starts at its centre."""
    preset = closed_room(side, side, seed)
    preset.env.name = f"arena-{side}"
    return preset


def two_room_world(
    corridor_length: int = 70,
    corridor_width: int = 3,
    room_side: int = 21,
    seed: int = 0
) -> PresetMap:
    """
    A long corridor-shaped room joined to an open square room by a
    width-1 door in the dividing wall.

    The agent starts at the west end of the corridor facing east.
    """
    height = room_side + 2
    door_col = corridor_length + 1
    width = door_col + room_side + 2
    middle = 1 + room_side // 2

    occupied = np.ones((height, width), dtype=bool)
    top = middle - corridor_width // 2
    occupied[top:top + corridor_width, 1:door_col] = False
    occupied[1:1 + room_side, door_col + 1:door_col + 1 + room_side] = False
    occupied[middle, door_col] = False

    start = Pose(1, middle, Heading.EAST)
    return PresetMap(
        _preset(occupied, "two-room", seed),
        start,
        landmarks={"door": (door_col, middle)},
    )


def hairpin_maze(arms: int = 6, arm_length: int = 24, arm_width: int = 2, seed: int = 0) -> PresetMap:
    """Parallel corridors joined alternately at their east and west ends."""
    height = arms * (arm_width + 1) + 1
    width = arm_length + 2
    occupied = np.ones((height, width), dtype=bool)

    for arm in range(arms):
        top = 1 + arm * (arm_width + 1)
        occupied[top:top + arm_width, 1:1 + arm_length] = False
        if arm + 1 < arms:
            wall_row = top + arm_width
            if arm % 2 == 0:
                occupied[wall_row, 1 + arm_length - arm_width:1 + arm_length] = False
            else:
                occupied[wall_row, 1:1 + arm_width] = False

    start = Pose(1, 1, Heading.EAST)
    return PresetMap(_preset(occupied, f"hairpin-{arms}", seed), start)
