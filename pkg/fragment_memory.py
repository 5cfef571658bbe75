"""
Fragment Memory (long-term memory)
----------------------------------
Stored map fragments, the connectivity graph linking fragments that share a
fracture point, fracture borders, recall checks and fragment-goal selection.

Every fragment keeps its own map frame. A fracture point has one id shared
by the two maps it joins; its position in each map is the anchor used to
carry the agent's pose across a recall.
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Dict, List, Optional, Tuple

import networkx as nx

from exceptions import FragmentStoreError
from fragment_cache import FragmentCache
from local_map import LocalMap
from models import Cell, FracturePoint, Heading, Occupancy

logger = logging.getLogger(__name__)


def manhattan(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


@dataclass
class FragmentRecord:
    """Bookkeeping for one stored fragment; the map itself lives in the cache."""
    id: int
    q: float
    fracture_points: List[FracturePoint] = field(default_factory=list)
    pairwise_fp_distances: Dict[Tuple[int, int], int] = field(default_factory=dict)
    stored_at: int = 0
    store_count: int = 0


class ConnectivityGraph:
    """Undirected graph: fragments as nodes, shared fracture points as edges."""

    def __init__(self):
        self.graph = nx.Graph()

    def __contains__(self, fragment_id: int) -> bool:
        return fragment_id in self.graph

    def __len__(self) -> int:
        return self.graph.number_of_nodes()

    @property
    def fragments(self) -> List[int]:
        return sorted(self.graph.nodes)

    def add_fragment(self, fragment_id: int, q: float = 0.0):
        if fragment_id in self.graph:
            self.graph.nodes[fragment_id]["q"] = q
        else:
            self.graph.add_node(fragment_id, q=q)

    def set_q(self, fragment_id: int, q: float):
        self.graph.nodes[fragment_id]["q"] = q

    def q(self, fragment_id: int) -> float:
        return float(self.graph.nodes[fragment_id]["q"])

    def link(self, a: int, b: int, fracture_id: int):
        self.graph.add_edge(a, b, fracture_id=fracture_id)

    def neighbors(self, fragment_id: int) -> List[Tuple[int, int]]:
        """(neighbor fragment, shared fracture point id), by neighbor id."""
        return sorted(
            (other, data["fracture_id"])
            for other, data in self.graph.adj[fragment_id].items()
        )

    def edges(self) -> List[Tuple[int, int, int]]:
        return sorted(
            (min(a, b), max(a, b), data["fracture_id"])
            for a, b, data in self.graph.edges(data=True)
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "nodes": [{"id": n, "q": self.q(n)} for n in self.fragments],
            "edges": [{"a": a, "b": b, "fracture_id": f} for a, b, f in self.edges()],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ConnectivityGraph':
        graph = cls()
        for node in data.get("nodes", []):
            graph.add_fragment(int(node["id"]), float(node["q"]))
        for edge in data.get("edges", []):
            graph.link(int(edge["a"]), int(edge["b"]), int(edge["fracture_id"]))
        return graph

    def to_dot(self, current: Optional[int] = None) -> str:
        """Graphviz source for the graph; the current fragment is drawn bold."""
        lines = ["graph fragments {", "  node [shape=circle];"]
        for node in self.fragments:
            style = ", style=bold" if node == current else ""
            lines.append(f'  f{node} [label="{node}\\nq={self.q(node):.3f}"{style}];')
        for a, b, fracture_id in self.edges():
            lines.append(f'  f{a} -- f{b} [label="fp{fracture_id}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def fracture_point_at(local_map: LocalMap, cell: Cell) -> Optional[FracturePoint]:
    return local_map.fracture_point_at(cell)


def check_recall(local_map: LocalMap, agent_pos: Cell) -> Optional[int]:
    """Neighbor fragment id when agent_pos lies on a fracture border, else None."""
    fp = local_map.fracture_point_at(agent_pos)
    return fp.neighbor_fragment if fp is not None else None


def make_fracture_border(local_map: LocalMap, pos: Cell, heading: Heading) -> List[Cell]:
    """
    Straight segment through pos perpendicular to heading, extended over
    known EMPTY cells until a wall or unknown cell in each direction.

    Returned in order along the agent's right-hand direction.
    """
    right = (heading.dcol, -heading.drow)
    left_side, right_side = [], []

    for direction, side in (((-right[0], -right[1]), left_side), (right, right_side)):
        r, c = pos[0] + direction[0], pos[1] + direction[1]
        while local_map.occupancy_at((r, c)) == Occupancy.EMPTY:
            side.append((r, c))
            r, c = r + direction[0], c + direction[1]

    return left_side[::-1] + [pos] + right_side


def pairwise_distances(fracture_points: List[FracturePoint]) -> Dict[Tuple[int, int], int]:
    """Symmetric Manhattan distance table between fracture points."""
    table = {}
    for a, b in combinations(fracture_points, 2):
        d = manhattan(a.pos, b.pos)
        table[(a.id, b.id)] = d
        table[(b.id, a.id)] = d
    return table


def select_fragment_goal(
    graph: ConnectivityGraph,
    current: int,
    q_current: float,
    fp_distances_from_agent: Dict[int, int],
    epsilon: float,
    q_overrides: Optional[Dict[int, float]] = None
) -> Tuple[int, Optional[int]]:
    """
    Fragment goal by discovery ratio over distance.

    Each fragment scores q / (d + epsilon): d = 0 for the current fragment,
    the agent's distance to the shared fracture point for adjacent
    fragments, infinity (score 0) for everything else. Ties go to the
    current fragment, then the lowest id.

    Args:
        graph: Connectivity graph containing current
        current: Current fragment id
        q_current: Current fragment's live discovery ratio
        fp_distances_from_agent: Distance from the agent to each fracture point of the current map
        epsilon: Preference for staying in the current fragment
        q_overrides: Per-fragment q replacements (exhausted fragments)

    Returns:
        Tuple[int, Optional[int]]: goal fragment and the fracture point id leading there
    """
    q_overrides = q_overrides or {}
    best, best_score, route = current, q_current / epsilon, None

    for neighbor, fracture_id in graph.neighbors(current):
        d = fp_distances_from_agent.get(fracture_id, math.inf)
        if math.isinf(d):
            continue
        q = q_overrides.get(neighbor, graph.q(neighbor))
        score = q / (d + epsilon)
        if score > best_score:
            best, best_score, route = neighbor, score, fracture_id

    return best, route


class LongTermMemory:
    """Fragment store plus connectivity graph for one episode."""

    def __init__(self, spill_dir: Optional[str] = None):
        self.graph = ConnectivityGraph()
        self.cache = FragmentCache(spill_dir)
        self.records: Dict[int, FragmentRecord] = {}
        self._next_fragment_id = 0
        self._next_fracture_id = 0

    @property
    def fragment_count(self) -> int:
        """Fragments created so far, including the active one."""
        return self._next_fragment_id

    def new_fragment(self, q: float = 0.0) -> int:
        """Allocate an id for a new fragment and add it to the graph."""
        fragment_id = self._next_fragment_id
        self._next_fragment_id += 1
        self.graph.add_fragment(fragment_id, q)
        return fragment_id

    def new_fracture_id(self) -> int:
        fracture_id = self._next_fracture_id
        self._next_fracture_id += 1
        return fracture_id

    def store_fragment(self, local_map: LocalMap, q: float, step: int = 0) -> int:
        """
        Archive a map snapshot under its fragment id.

        Refreshes the node's q, links the fragment to every stored or current
        fragment it shares a fracture point with and precomputes the
        fracture point distance table.

        Returns:
            int: the stored fragment id
        """
        fragment_id = local_map.fragment_id
        table = pairwise_distances(local_map.fracture_points)
        for fp in local_map.fracture_points:
            fp.distances_to_other_fps = {
                other.id: table[(fp.id, other.id)]
                for other in local_map.fracture_points if other.id != fp.id
            }

        self.graph.add_fragment(fragment_id, q)
        for fp in local_map.fracture_points:
            if fp.neighbor_fragment in self.graph:
                self.graph.link(fragment_id, fp.neighbor_fragment, fp.id)

        previous = self.records.get(fragment_id)
        self.records[fragment_id] = FragmentRecord(
            id=fragment_id,
            q=q,
            fracture_points=local_map.copy().fracture_points,
            pairwise_fp_distances=table,
            stored_at=step,
            store_count=(previous.store_count if previous else 0) + 1,
        )
        self.cache.put(fragment_id, local_map)
        self.cache.write_manifest(self.graph.to_dict())

        logger.debug(f"Stored fragment {fragment_id} (q={q:.4f}) at step {step}")
        return fragment_id

    def recall(self, fragment_id: int) -> LocalMap:
        """
        Fetch a stored fragment.

        Raises:
            FragmentStoreError: If the fragment was never stored
        """
        if fragment_id not in self.records:
            raise FragmentStoreError(f"Fragment {fragment_id} was never stored")
        return self.cache.get(fragment_id)

    def q(self, fragment_id: int) -> float:
        return self.graph.q(fragment_id)
