"""
Exploration Agents
------------------
Decision policies driven one step at a time by the episode runner:

- FarmapAgent: surprisal-triggered map fragmentation with long-term memory
  recall and fragment-goal selection.
- FrontierAgent: one global map, weighted frontier-edge exploration.
- RandomAgent: uniform random moves, no map.

A step is split in two phases. perceive() integrates the observation and
runs the recall / fragmentation checks; decide() keeps or replaces the
current plan and returns the next action (None once exploration is done).
"""

import logging
import math
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass
from typing import Any, Deque, Dict, List, Optional, Set, Tuple

import numpy as np

from exceptions import NoFrontierError
from fragment_memory import (
    LongTermMemory, make_fracture_border, manhattan, select_fragment_goal,
)
from local_map import (
    Growth, LocalMap, blank_for_observation, detect_frontiers, discovery_ratio,
    new_local_map, surprisal, transform_observation, update_map,
)
from models import (
    Action, AgentKind, Cell, FracturePoint, FrontierEdge, Heading, Observation,
    Occupancy, StepEvent,
)
from path_planner import DijkstraPlanner, Planner, distance_field
from settings import AgentConfig

logger = logging.getLogger(__name__)


# Fragmentation triggers


class FragmentationTrigger(ABC):
    """Decides whether the current step starts a new fragment."""

    @abstractmethod
    def fires(self, z: float, s: float, step: int) -> bool:
        ...


class SurprisalTrigger(FragmentationTrigger):
    def __init__(self, rho: float):
        self.rho = rho

    def fires(self, z: float, s: float, step: int) -> bool:
        return z > self.rho


class RawSurprisalTrigger(FragmentationTrigger):
    """Threshold on s itself instead of its z-score."""

    def __init__(self, threshold: float):
        self.threshold = threshold

    def fires(self, z: float, s: float, step: int) -> bool:
        return s > self.threshold


class RandomTrigger(FragmentationTrigger):
    def __init__(self, probability: float, rng: np.random.Generator):
        self.probability = probability
        self.rng = rng

    def fires(self, z: float, s: float, step: int) -> bool:
        # one draw per step whatever the outcome
        return bool(self.rng.random() < self.probability)


class UniformTrigger(FragmentationTrigger):
    def __init__(self, interval: int):
        self.interval = interval

    def fires(self, z: float, s: float, step: int) -> bool:
        return step > 0 and step % self.interval == 0


class NeverTrigger(FragmentationTrigger):
    def fires(self, z: float, s: float, step: int) -> bool:
        return False


def build_trigger(config: AgentConfig, rng: np.random.Generator) -> FragmentationTrigger:
    if config.kind == AgentKind.FARMAP_RANDOM_FRAG:
        return RandomTrigger(config.frag_probability, rng)
    if config.kind == AgentKind.FARMAP_UNIFORM_FRAG:
        return UniformTrigger(config.frag_interval)
    if config.kind != AgentKind.FARMAP:
        return NeverTrigger()
    if not config.use_zscore:
        return RawSurprisalTrigger(config.surprisal_threshold)
    if math.isinf(config.rho):
        return NeverTrigger()
    return SurprisalTrigger(config.rho)


# Frontier subgoals


def edge_weights(
    edges: List[FrontierEdge],
    agent_pos: Cell,
    heading: Heading,
    weighting: str = "size_heading"
) -> np.ndarray:
    """
    Sampling weight per frontier edge.

    size_heading: |F| / d, zeroed for edges behind the agent; if that zeroes
    every edge the heading indicator is dropped. inverse_distance: 1 / d.
    d is the Manhattan distance to the centroid, at least 1.
    """
    ar, ac = agent_pos
    centroids = np.array([e.centroid for e in edges], dtype=np.float64).reshape(-1, 2)
    offsets = centroids - np.array([ar, ac], dtype=np.float64)
    d = np.maximum(np.abs(offsets).sum(axis=1), 1.0)

    if weighting == "inverse_distance":
        return 1.0 / d

    sizes = np.array([e.size for e in edges], dtype=np.float64)
    ahead = offsets @ np.array([heading.drow, heading.dcol], dtype=np.float64) >= 0
    weights = sizes * ahead / d
    if not weights.any():
        weights = sizes / d
    return weights


def sample_frontier_edge(weights: np.ndarray, rng: np.random.Generator) -> int:
    """Index drawn with probability w_i / sum(w); one uniform draw."""
    cumulative = np.cumsum(weights)
    index = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
    return min(index, len(weights) - 1)


def centroid_nearest_cell(edge: FrontierEdge) -> Cell:
    """Edge cell nearest its centroid (L1); ties by lowest row, then column."""
    cr, cc = edge.centroid
    best = min(
        (abs(r - cr) + abs(c - cc), int(r), int(c)) for r, c in edge.cells
    )
    return best[1], best[2]


def reachable_edge_cell(edge: FrontierEdge, dist: np.ndarray) -> Optional[Cell]:
    """
    Reachable edge cell nearest the centroid, same tie order.

    dist is a padded distance field (see distance_field); None when no
    cell of the edge has a distance.
    """
    reachable = edge.cells[dist[edge.cells[:, 0] + 1, edge.cells[:, 1] + 1] >= 0]
    if len(reachable) == 0:
        return None
    return centroid_nearest_cell(FrontierEdge(cells=reachable, centroid=edge.centroid))


def select_frontier_subgoal(
    local_map: LocalMap,
    agent_pos: Cell,
    heading: Heading,
    rng: np.random.Generator,
    weighting: str = "size_heading"
) -> Cell:
    """
    Weighted frontier-edge draw; returns the chosen edge's centroid-nearest cell.

    Raises:
        NoFrontierError: If the map has no frontier
    """
    edges = detect_frontiers(local_map)
    if not edges:
        raise NoFrontierError("Local map has no frontier edges")
    index = sample_frontier_edge(edge_weights(edges, agent_pos, heading, weighting), rng)
    return centroid_nearest_cell(edges[index])


# Agents


@dataclass
class ActivePlan:
    """Queued actions and what they lead to."""
    kind: str
    goal: Cell
    actions: Deque[Action]
    route_fracture: Optional[int] = None


@dataclass
class EventRecord:
    step: int
    event: str
    fragment_from: int
    fragment_to: int
    map_pos: Cell
    world_pos: Tuple[int, int]
    z: float
    fracture_id: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "step": self.step,
            "event": self.event,
            "fragment_from": self.fragment_from,
            "fragment_to": self.fragment_to,
            "map_pos": list(self.map_pos),
            "world_pos": list(self.world_pos),
            "z": self.z,
            "fracture_id": self.fracture_id,
        }


class ExplorationAgent(ABC):
    """Common step bookkeeping."""

    def __init__(self, config: AgentConfig):
        self.config = config
        self.step_count = 0
        self.done = False
        self.last_surprisal = 0.0
        self.last_z = 0.0
        self.last_event = StepEvent.NONE
        self.events: List[EventRecord] = []

    @property
    def stm_cells(self) -> int:
        return 0

    @property
    def fragment_count(self) -> int:
        return 0

    @property
    def recall_count(self) -> int:
        return 0

    @property
    def current_fragment(self) -> int:
        return 0

    @abstractmethod
    def perceive(self, obs: Observation):
        ...

    @abstractmethod
    def decide(self) -> Optional[Action]:
        ...

    def step(self, obs: Observation) -> Optional[Action]:
        """One full step; None means exploration is complete."""
        self.perceive(obs)
        action = self.decide()
        self.step_count += 1
        return action


class RandomAgent(ExplorationAgent):
    """Uniform over the four moves every step."""

    def __init__(self, config: AgentConfig):
        super().__init__(config)
        self.rng = np.random.default_rng(config.seed)

    def perceive(self, obs: Observation):
        self.last_event = StepEvent.NONE

    def decide(self) -> Optional[Action]:
        return Action(int(self.rng.integers(4)))


class MapExplorer(ExplorationAgent):
    """
    Map-building agent: local map, fragment store, frontier planning.

    With a trigger that never fires and no LTM subgoals this is the Frontier
    baseline; FarmapAgent only swaps in its trigger.
    """

    def __init__(
        self,
        config: AgentConfig,
        trigger: FragmentationTrigger,
        ltm_subgoal: bool,
        planner: Optional[Planner] = None
    ):
        super().__init__(config)
        self.rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[0])
        self.trigger = trigger
        self.ltm_subgoal = ltm_subgoal
        self.planner = planner or DijkstraPlanner()

        self.ltm = LongTermMemory(config.spill_dir)
        self.stm: Optional[LocalMap] = None
        self.plan: Optional[ActivePlan] = None
        self.exhausted: Set[int] = set()
        self._recalls = 0
        self._last_obs: Optional[Observation] = None
        self._last_action: Optional[Action] = None
        self._border_fp: Optional[int] = None

    @property
    def stm_cells(self) -> int:
        return self.stm.cells if self.stm is not None else 0

    @property
    def fragment_count(self) -> int:
        return self.ltm.fragment_count

    @property
    def recall_count(self) -> int:
        return self._recalls

    @property
    def current_fragment(self) -> int:
        return self.stm.fragment_id if self.stm is not None else 0

    # perception

    def perceive(self, obs: Observation):
        """Map update, surprisal, recall / fragmentation checks, statistics."""
        step = self.step_count
        self.last_event = StepEvent.NONE
        pose = obs.pose_at_capture

        if self.stm is None:
            fragment_id = self.ltm.new_fragment()
            self.stm = blank_for_observation(obs, pose.heading, fragment_id, step)
            blocked = False
        else:
            last = self._last_obs.pose_at_capture
            dr, dc = pose.y - last.y, pose.x - last.x
            blocked = self._last_action is not None and dr == 0 and dc == 0
            self._move_agent((self.stm.agent_pos[0] + dr, self.stm.agent_pos[1] + dc))
            self.stm.heading = pose.heading

        layers, growth = transform_observation(obs, self.stm)
        self._grow(growth)
        s = surprisal(self.stm, layers)
        z = self.stm.stats.zscore(s)
        update_map(self.stm, layers, self.config.gamma, self.config.forget_below_floor)
        q_c = discovery_ratio(self.stm)
        self.last_surprisal, self.last_z = s, z
        self._last_obs = obs

        fp = self.stm.fracture_point_at(self.stm.agent_pos)
        fires = self.trigger.fires(z, s, step)
        recall = fp is not None and fp.id != self._border_fp
        fragment = not recall and fires and self._enough_samples()
        # into the map s was measured against, before an event archives it
        self.stm.stats.push(s)
        if recall:
            self._recall(fp, q_c, obs, z)
        elif fragment:
            self._fragment(q_c, obs, z)

        fp = self.stm.fracture_point_at(self.stm.agent_pos)
        self._border_fp = fp.id if fp is not None else None

        if self.last_event != StepEvent.NONE or blocked:
            self.plan = None
        elif self.plan is not None and not self._plan_still_valid():
            self.plan = None

    def _enough_samples(self) -> bool:
        return not self.config.sample_guard or self.stm.stats.n > self.config.min_samples

    def _move_agent(self, pos: Cell):
        """Odometry update; grows the map if pos falls outside it."""
        growth = self.stm.ensure_contains(pos)
        self._shift_plan(growth)
        self.stm.agent_pos = (pos[0] + growth.top, pos[1] + growth.left)

    def _grow(self, growth: Growth):
        self.stm.grow(growth)
        self._shift_plan(growth)

    def _shift_plan(self, growth: Growth):
        if self.plan is not None and growth.any:
            g = self.plan.goal
            self.plan.goal = (g[0] + growth.top, g[1] + growth.left)

    def _plan_still_valid(self) -> bool:
        if not self.plan.actions:
            return False
        if self.plan.kind == "frontier" and self.stm.occupancy_at(self.plan.goal) != Occupancy.UNKNOWN:
            return False
        heading = self.plan.actions[0].heading
        target = (self.stm.agent_pos[0] + heading.drow, self.stm.agent_pos[1] + heading.dcol)
        return self.stm.occupancy_at(target) != Occupancy.OCCUPIED

    def _log(self, event: StepEvent, fragment_from: int, fragment_to: int,
             obs: Observation, z: float, fracture_id: Optional[int] = None):
        pose = obs.pose_at_capture
        self.events.append(EventRecord(
            step=self.step_count,
            event=event.value,
            fragment_from=fragment_from,
            fragment_to=fragment_to,
            map_pos=self.stm.agent_pos,
            world_pos=(pose.x, pose.y),
            z=float(z),
            fracture_id=fracture_id,
        ))

    def _fragment(self, q_c: float, obs: Observation, z: float):
        """Archive the current map and continue in a fresh one."""
        old = self.stm
        new_id = self.ltm.new_fragment()
        fracture_id = self.ltm.new_fracture_id()
        border = make_fracture_border(old, old.agent_pos, old.heading)
        old.fracture_points.append(FracturePoint(fracture_id, old.agent_pos, border, new_id))

        new = new_local_map(obs, self.config.gamma, new_id, self.step_count, self.config.forget_below_floor)
        dr, dc = new.agent_pos[0] - old.agent_pos[0], new.agent_pos[1] - old.agent_pos[1]
        # the new map only keeps the part of the border inside its bounds
        new_border = [(r + dr, c + dc) for r, c in border if new.in_bounds((r + dr, c + dc))]
        new.fracture_points.append(FracturePoint(fracture_id, new.agent_pos, new_border, old.fragment_id))

        self.ltm.store_fragment(old, q_c, self.step_count)
        self.stm = new
        self.last_event = StepEvent.FRAGMENT
        self._log(StepEvent.FRAGMENT, old.fragment_id, new_id, obs, z, fracture_id)
        logger.debug(f"Fragmentation at step {self.step_count}: {old.fragment_id} -> {new_id} (z={z:.2f})")

    def _recall(self, fp: FracturePoint, q_c: float, obs: Observation, z: float):
        """Swap in the fragment on the other side of fp."""
        old = self.stm
        self.ltm.store_fragment(old, q_c, self.step_count)
        recalled = self.ltm.recall(fp.neighbor_fragment)

        anchor = recalled.find_fracture_point(fp.id)
        offset = (old.agent_pos[0] - fp.pos[0], old.agent_pos[1] - fp.pos[1])
        pos = (anchor.pos[0] + offset[0], anchor.pos[1] + offset[1])
        recalled.ensure_contains(pos)
        anchor = recalled.find_fracture_point(fp.id)
        recalled.agent_pos = (anchor.pos[0] + offset[0], anchor.pos[1] + offset[1])
        recalled.heading = old.heading

        layers, growth = transform_observation(obs, recalled)
        recalled.grow(growth)
        update_map(recalled, layers, self.config.gamma, self.config.forget_below_floor)

        self.stm = recalled
        self._recalls += 1
        self.last_event = StepEvent.RECALL
        self._border_fp = fp.id
        self._log(StepEvent.RECALL, old.fragment_id, recalled.fragment_id, obs, z, fp.id)
        logger.debug(f"Recall at step {self.step_count}: {old.fragment_id} -> {recalled.fragment_id}")

    # decision

    def decide(self) -> Optional[Action]:
        """Next action from the current plan, replanning when it is gone."""
        if self.done:
            return None
        if self.plan is None:
            self.plan = self._replan()
            if self.plan is None:
                self.done = True
                if self.last_event == StepEvent.NONE:
                    self.last_event = StepEvent.DONE
                logger.debug(f"Exploration complete at step {self.step_count}")
                return None
            if self.last_event == StepEvent.NONE:
                self.last_event = StepEvent.REPLAN
                self._log(StepEvent.REPLAN, self.current_fragment, self.current_fragment,
                          self._last_obs, self.last_z)

        action = self.plan.actions.popleft()
        self._last_action = action
        return action

    def _fracture_distances(self) -> Dict[int, int]:
        return {fp.id: manhattan(self.stm.agent_pos, fp.pos) for fp in self.stm.fracture_points}

    def _select_goal(self, blocked_routes: Set[int]) -> Tuple[int, Optional[int]]:
        current = self.stm.fragment_id
        if not self.ltm_subgoal:
            return current, None
        q_c = 0.0 if current in self.exhausted else discovery_ratio(self.stm)
        overrides = {f: 0.0 for f in self.exhausted | blocked_routes}
        goal, route = select_fragment_goal(
            self.ltm.graph, current, q_c, self._fracture_distances(),
            self.config.epsilon, overrides,
        )
        gate = self.config.low_z_gate
        if goal != current and gate is not None and not self.last_z < gate:
            return current, None
        return goal, route

    def _replan(self) -> Optional[ActivePlan]:
        """
        Fragment-goal selection followed by subgoal planning.

        Returns None when neither the current fragment nor any fragment
        selectable from it leaves anything to explore.
        """
        blocked_routes: Set[int] = set()
        visited: Set[int] = {self.stm.fragment_id}

        for _ in range(4 * self.ltm.fragment_count + 4):
            goal, route = self._select_goal(blocked_routes)
            current = self.stm.fragment_id

            if goal == current:
                plan = self._frontier_plan()
                if plan is not None:
                    self.exhausted.discard(current)
                    return plan
                if current in self.exhausted or not self.ltm_subgoal:
                    return None
                self.exhausted.add(current)
                continue

            fp = self.stm.find_fracture_point(route)
            if self.stm.agent_pos in fp.border:
                if self.last_event != StepEvent.NONE or goal in visited:
                    step_off = self._step_off_plan(fp)
                    if step_off is not None:
                        return step_off
                    blocked_routes.add(goal)
                    continue
                visited.add(goal)
                self._recall(fp, discovery_ratio(self.stm), self._last_obs, self.last_z)
                continue

            plan = self._route_plan(fp)
            if plan is not None:
                return plan
            blocked_routes.add(goal)

        logger.warning(f"Goal selection did not settle at step {self.step_count}")
        return self._frontier_plan()

    def _route_plan(self, fp: FracturePoint) -> Optional[ActivePlan]:
        """Path to the fracture point, or to its nearest reachable border cell."""
        dist = distance_field(self.stm, self.stm.agent_pos)
        reachable = [cell for cell in fp.border if dist[cell[0] + 1, cell[1] + 1] >= 0
                     and self.stm.is_known_empty(cell)]
        if not reachable:
            return None
        target = min(reachable, key=lambda cell: (manhattan(cell, fp.pos), cell))
        plan = self.planner.plan(self.stm, self.stm.agent_pos, target)
        return ActivePlan("fracture", target, deque(plan.actions), fp.id)

    def _step_off_plan(self, fp: FracturePoint) -> Optional[ActivePlan]:
        """One move onto a known EMPTY cell off the border."""
        r, c = self.stm.agent_pos
        for heading in Heading:
            cell = (r + heading.drow, c + heading.dcol)
            if self.stm.is_known_empty(cell) and cell not in fp.border:
                return ActivePlan("step_off", cell, deque([Action.toward(heading)]))
        return None

    def _frontier_plan(self) -> Optional[ActivePlan]:
        """
        Weighted frontier-edge draw with the unreachable-frontier fix.

        The subgoal is the reachable cell of the drawn edge nearest its
        centroid. An edge with no reachable cell is replaced by the reachable
        known EMPTY cell nearest its centroid-nearest cell; if that is the
        agent's own cell the edge is dropped and the draw repeated. None
        therefore means no frontier cell is reachable.
        """
        edges = detect_frontiers(self.stm)
        if not edges:
            return None
        agent = self.stm.agent_pos
        dist = distance_field(self.stm, agent)
        reachable_empty = None
        remaining = list(range(len(edges)))

        while remaining:
            weights = edge_weights(
                [edges[i] for i in remaining], agent, self.stm.heading, self.config.weighting
            )
            choice = remaining[sample_frontier_edge(weights, self.rng)]

            subgoal = reachable_edge_cell(edges[choice], dist)
            if subgoal is not None:
                plan = self.planner.plan(self.stm, agent, subgoal)
                return ActivePlan("frontier", subgoal, deque(plan.actions))

            subgoal = centroid_nearest_cell(edges[choice])
            if reachable_empty is None:
                rows, cols = np.nonzero(
                    (dist[1:-1, 1:-1] >= 0) & (self.stm.occupancy == Occupancy.EMPTY)
                )
                reachable_empty = np.stack([rows, cols], axis=1)
            l1 = np.abs(reachable_empty - np.array(subgoal)).sum(axis=1)
            nearest = reachable_empty[int(np.argmin(l1))]
            fallback = (int(nearest[0]), int(nearest[1]))
            if fallback != agent:
                logger.debug(f"Frontier {subgoal} unreachable; heading to {fallback}")
                plan = self.planner.plan(self.stm, agent, fallback)
                return ActivePlan("fallback", fallback, deque(plan.actions))
            remaining.remove(choice)

        return None


class FrontierAgent(MapExplorer):
    """Single global map, never fragmented."""

    def __init__(self, config: AgentConfig, planner: Optional[Planner] = None):
        super().__init__(config, NeverTrigger(), ltm_subgoal=False, planner=planner)


class FarmapAgent(MapExplorer):
    """Fragmenting agent with long-term memory."""

    def __init__(self, config: AgentConfig, planner: Optional[Planner] = None):
        seeds = np.random.SeedSequence(config.seed).spawn(2)
        trigger = build_trigger(config, np.random.default_rng(seeds[1]))
        super().__init__(config, trigger, ltm_subgoal=config.ltm_subgoal, planner=planner)


def build_agent(config: AgentConfig, planner: Optional[Planner] = None) -> ExplorationAgent:
    """Agent instance for a configuration."""
    config.validate()
    if config.kind == AgentKind.RANDOM_EXPLORE:
        return RandomAgent(config)
    if config.kind == AgentKind.FRONTIER:
        return FrontierAgent(config, planner)
    return FarmapAgent(config, planner)
