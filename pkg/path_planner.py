"""
Path Planner
------------
Shortest paths on a local map over known EMPTY cells.

A goal may be an UNKNOWN frontier cell, including one in the virtual ring
just outside the map bounds; it is entered as the final step only.
"""

import heapq
import itertools
import logging
from collections import deque
from typing import Dict, List, Optional, Protocol

import numpy as np

from exceptions import InvalidStartError, UnreachableGoalError
from local_map import LocalMap
from models import Action, Cell, Heading, Occupancy, Plan

logger = logging.getLogger(__name__)

# Expansion order N, E, S, W as (drow, dcol).
NEIGHBOR_STEPS = [(h.drow, h.dcol) for h in (Heading.NORTH, Heading.EAST, Heading.SOUTH, Heading.WEST)]


class Planner(Protocol):
    """Anything that turns (map, start, goal) into a Plan."""

    def plan(self, local_map: LocalMap, start: Cell, goal: Cell) -> Plan:
        ...


def path_to_actions(path: List[Cell]) -> List[Action]:
    actions = []
    for (r0, c0), (r1, c1) in zip(path, path[1:]):
        step = (r1 - r0, c1 - c0)
        actions.append(Action(NEIGHBOR_STEPS.index(step)))
    return actions


def _check_start(local_map: LocalMap, start: Cell):
    if not local_map.is_known_empty(start):
        raise InvalidStartError(f"Plan start {start} is not a known EMPTY cell")


def _goal_enterable(local_map: LocalMap, goal: Cell) -> bool:
    return local_map.occupancy_at(goal) != Occupancy.OCCUPIED


class DijkstraPlanner:
    """Uniform-cost Dijkstra with a stable priority queue."""

    def plan(self, local_map: LocalMap, start: Cell, goal: Cell) -> Plan:
        """
        Plan a minimum-step path.

        Args:
            local_map: Map to plan on
            start: Known EMPTY start cell
            goal: Any cell of the map or of its one-cell outer ring

        Returns:
            Plan: actions, goal, cost and the visited cell sequence

        Raises:
            InvalidStartError: If start is not known EMPTY
            UnreachableGoalError: If no path exists
        """
        _check_start(local_map, start)
        if start == goal:
            return Plan(actions=[], goal=goal, cost=0, path=[start])
        if not _goal_enterable(local_map, goal):
            raise UnreachableGoalError(f"Goal {goal} is OCCUPIED")

        counter = itertools.count()
        dist: Dict[Cell, int] = {start: 0}
        parent: Dict[Cell, Cell] = {}
        queue = [(0, next(counter), start)]

        while queue:
            cost, _, cell = heapq.heappop(queue)
            if cell == goal:
                break
            if cost > dist[cell]:
                continue
            for dr, dc in NEIGHBOR_STEPS:
                nxt = (cell[0] + dr, cell[1] + dc)
                if nxt != goal and not local_map.is_known_empty(nxt):
                    continue
                new_cost = cost + 1
                if new_cost < dist.get(nxt, new_cost + 1):
                    dist[nxt] = new_cost
                    parent[nxt] = cell
                    heapq.heappush(queue, (new_cost, next(counter), nxt))

        if goal not in dist:
            raise UnreachableGoalError(f"No path from {start} to {goal}")

        path = [goal]
        while path[-1] != start:
            path.append(parent[path[-1]])
        path.reverse()
        return Plan(actions=path_to_actions(path), goal=goal, cost=dist[goal], path=path)


def shortest_path(local_map: LocalMap, start: Cell, goal: Cell, planner: Optional[Planner] = None) -> Plan:
    """Plan with the given planner, Dijkstra by default."""
    return (planner or DijkstraPlanner()).plan(local_map, start, goal)


def distance_field(local_map: LocalMap, start: Cell) -> np.ndarray:
    """
    Step distance from start to every cell of the map padded by one ring.

    Known EMPTY cells are traversed; any other non-OCCUPIED cell gets a
    distance when it is entered from a reachable cell but is not expanded.
    Unreachable cells hold -1. Index (r + 1, c + 1) is map cell (r, c).
    """
    _check_start(local_map, start)
    padded = np.pad(local_map.occupancy, 1, constant_values=Occupancy.UNKNOWN)
    H, W = padded.shape
    dist = np.full((H, W), -1, dtype=np.int64)
    r0, c0 = start[0] + 1, start[1] + 1
    dist[r0, c0] = 0
    queue = deque([(r0, c0)])

    while queue:
        r, c = queue.popleft()
        for dr, dc in NEIGHBOR_STEPS:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < H and 0 <= nc < W) or dist[nr, nc] >= 0:
                continue
            state = padded[nr, nc]
            if state == Occupancy.OCCUPIED:
                continue
            dist[nr, nc] = dist[r, c] + 1
            if state == Occupancy.EMPTY:
                queue.append((nr, nc))
    return dist
