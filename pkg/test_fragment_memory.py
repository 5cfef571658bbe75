import math
from itertools import product

import numpy as np
import pytest

from exceptions import FragmentStoreError
from fragment_cache import FragmentCache
from fragment_memory import (
    ConnectivityGraph, LongTermMemory, check_recall, make_fracture_border,
    manhattan, pairwise_distances, select_fragment_goal,
)
from local_map import LocalMap, RunningStats
from map_io import dump_local_map, load_local_map, local_map_from_dict, local_map_to_dict
from models import FracturePoint, Heading, Occupancy


def random_fragment(rng: np.random.Generator, fragment_id: int) -> LocalMap:
    H, W = int(rng.integers(3, 20)), int(rng.integers(3, 20))
    local_map = LocalMap.blank(H, W, (int(rng.integers(H)), int(rng.integers(W))),
                               Heading(int(rng.integers(4))), fragment_id, int(rng.integers(100)))
    local_map.confidence = rng.random((H, W))
    local_map.color = rng.integers(0, 256, size=(H, W, 3), dtype=np.uint8)
    local_map.occupancy = rng.integers(0, 3, size=(H, W)).astype(np.int8)
    local_map.origin = (int(rng.integers(-5, 5)), int(rng.integers(-5, 5)))
    local_map.stats = RunningStats(int(rng.integers(50)), float(rng.random()), float(rng.random()))
    for k in range(int(rng.integers(0, 4))):
        pos = (int(rng.integers(H)), int(rng.integers(W)))
        local_map.fracture_points.append(
            FracturePoint(k, pos, [pos, (pos[0], pos[1] + 1)], int(rng.integers(10)), {k + 1: 3})
        )
    return local_map


def assert_maps_equal(a: LocalMap, b: LocalMap):
    assert a.confidence.tobytes() == b.confidence.tobytes()
    assert a.color.tobytes() == b.color.tobytes()
    assert a.occupancy.tobytes() == b.occupancy.tobytes()
    assert a.confidence.dtype == b.confidence.dtype
    assert (a.agent_pos, a.heading, a.origin) == (b.agent_pos, b.heading, b.origin)
    assert (a.created_at, a.fragment_id) == (b.created_at, b.fragment_id)
    assert a.stats == b.stats
    assert a.fracture_points == b.fracture_points


def corridor_map(width: int, length: int = 7) -> LocalMap:
    """A north-south corridor of the given width, walls on both sides."""
    local_map = LocalMap.blank(length, width + 2, (length // 2, 1 + width // 2), Heading.NORTH)
    local_map.occupancy[:] = Occupancy.OCCUPIED
    local_map.occupancy[:, 1:1 + width] = Occupancy.EMPTY
    return local_map


def brute_force_border(local_map: LocalMap, pos, heading: Heading):
    cells = [pos]
    for sign in (-1, 1):
        step = (sign * heading.dcol, -sign * heading.drow)
        cell = (pos[0] + step[0], pos[1] + step[1])
        while 0 <= cell[0] < local_map.H and 0 <= cell[1] < local_map.W \
                and local_map.occupancy[cell] == Occupancy.EMPTY:
            cells.append(cell)
            cell = (cell[0] + step[0], cell[1] + step[1])
    return cells


def exhaustive_goal(graph, current, q_current, distances, epsilon):
    best, best_score = None, -math.inf
    for node in sorted(graph.fragments, key=lambda n: (n != current, n)):
        if node == current:
            score = q_current / epsilon
        else:
            shared = [f for other, f in graph.neighbors(current) if other == node]
            d = distances.get(shared[0], math.inf) if shared else math.inf
            score = graph.q(node) / (d + epsilon)
        if score > best_score:
            best, best_score = node, score
    return best


class TestRoundTrip:
    def test_memory_cache(self):
        rng = np.random.default_rng(0)
        cache = FragmentCache()
        for fragment_id in range(100):
            local_map = random_fragment(rng, fragment_id)
            cache.put(fragment_id, local_map)
            assert_maps_equal(cache.get(fragment_id), local_map)

    def test_spilled_to_disk(self, tmp_path):
        rng = np.random.default_rng(1)
        cache = FragmentCache(str(tmp_path / "spill"))
        originals = {}
        for fragment_id in range(100):
            originals[fragment_id] = random_fragment(rng, fragment_id)
            cache.put(fragment_id, originals[fragment_id])
        for fragment_id, local_map in originals.items():
            assert fragment_id in cache
            assert_maps_equal(cache.get(fragment_id), local_map)
        assert (tmp_path / "spill" / "fragment-00042.json").exists()

    def test_snapshot_is_isolated(self):
        rng = np.random.default_rng(2)
        cache = FragmentCache()
        local_map = random_fragment(rng, 0)
        cache.put(0, local_map)
        local_map.confidence[0, 0] = -1.0
        fetched = cache.get(0)
        assert fetched.confidence[0, 0] != -1.0
        fetched.confidence[0, 0] = -2.0
        assert cache.get(0).confidence[0, 0] != -2.0

    def test_dump_and_load(self, tmp_path):
        local_map = random_fragment(np.random.default_rng(3), 4)
        path = str(tmp_path / "map.json")
        dump_local_map(local_map, path)
        assert_maps_equal(load_local_map(path), local_map)
        assert_maps_equal(local_map_from_dict(local_map_to_dict(local_map)), local_map)

    def test_missing_fragment_raises(self, tmp_path):
        with pytest.raises(FragmentStoreError):
            FragmentCache().get(3)
        with pytest.raises(FragmentStoreError):
            LongTermMemory(str(tmp_path)).recall(0)

    def test_malformed_dump_raises(self):
        with pytest.raises(FragmentStoreError):
            local_map_from_dict({"H": 2})

    def test_clear(self, tmp_path):
        cache = FragmentCache(str(tmp_path))
        cache.put(0, random_fragment(np.random.default_rng(4), 0))
        cache.write_manifest({"nodes": [], "edges": []})
        cache.clear()
        assert 0 not in cache
        assert list(tmp_path.iterdir()) == []


class TestLongTermMemory:
    def test_store_links_shared_fracture_point(self):
        ltm = LongTermMemory()
        a = ltm.new_fragment()
        b = ltm.new_fragment()
        fracture_id = ltm.new_fracture_id()
        first = LocalMap.blank(5, 5, (2, 2), Heading.NORTH, fragment_id=a)
        first.fracture_points.append(FracturePoint(fracture_id, (2, 2), [(2, 2)], b))
        ltm.store_fragment(first, 0.3)
        assert ltm.graph.edges() == [(a, b, fracture_id)]
        assert ltm.q(a) == 0.3
        assert ltm.fragment_count == 2

    def test_distance_table_is_symmetric(self):
        ltm = LongTermMemory()
        ltm.new_fragment()
        local_map = LocalMap.blank(10, 10, (0, 0), Heading.NORTH)
        positions = [(0, 0), (3, 4), (9, 1)]
        for k, pos in enumerate(positions):
            local_map.fracture_points.append(FracturePoint(k, pos, [pos], 5 + k))
        ltm.store_fragment(local_map, 0.1)
        table = ltm.records[0].pairwise_fp_distances
        assert len(table) == 6
        for (i, a), (j, b) in product(enumerate(positions), repeat=2):
            if i != j:
                assert table[(i, j)] == table[(j, i)] == abs(a[0] - b[0]) + abs(a[1] - b[1])
        stored = ltm.recall(0)
        assert stored.fracture_points[0].distances_to_other_fps == {1: 7, 2: 10}

    def test_recall_returns_last_store(self):
        ltm = LongTermMemory()
        ltm.new_fragment()
        local_map = LocalMap.blank(3, 3, (1, 1), Heading.NORTH)
        ltm.store_fragment(local_map, 0.5, step=1)
        local_map.confidence[1, 1] = 0.7
        ltm.store_fragment(local_map, 0.25, step=9)
        assert ltm.recall(0).confidence[1, 1] == 0.7
        assert ltm.q(0) == 0.25
        assert ltm.records[0].store_count == 2
        assert ltm.records[0].stored_at == 9

    def test_spill_writes_manifest(self, tmp_path):
        ltm = LongTermMemory(str(tmp_path))
        ltm.new_fragment()
        ltm.store_fragment(LocalMap.blank(3, 3, (1, 1), Heading.NORTH), 0.2)
        assert (tmp_path / "manifest.json").exists()
        assert (tmp_path / "fragment-00000.json").exists()


class TestGraph:
    def test_round_trip_through_dict(self):
        graph = ConnectivityGraph()
        for node, q in enumerate((0.1, 0.2, 0.3)):
            graph.add_fragment(node, q)
        graph.link(0, 1, 7)
        graph.link(2, 1, 8)
        copy = ConnectivityGraph.from_dict(graph.to_dict())
        assert copy.edges() == graph.edges() == [(0, 1, 7), (1, 2, 8)]
        assert copy.neighbors(1) == [(0, 7), (2, 8)]

    def test_dot_output(self):
        graph = ConnectivityGraph()
        graph.add_fragment(0, 0.5)
        graph.add_fragment(1, 0.25)
        graph.link(0, 1, 3)
        dot = graph.to_dot(current=1)
        assert dot.startswith("graph fragments {")
        assert "f0 -- f1" in dot
        assert "style=bold" in dot.split("f1 [")[1].split("\n")[0]


class TestGoalSelection:
    def test_only_current(self):
        graph = ConnectivityGraph()
        graph.add_fragment(0, 0.5)
        assert select_fragment_goal(graph, 0, 0.5, {}, 5.0) == (0, None)

    def test_neighbor_wins(self):
        graph = ConnectivityGraph()
        graph.add_fragment(0, 0.1)
        graph.add_fragment(1, 0.5)
        graph.link(0, 1, 4)
        assert select_fragment_goal(graph, 0, 0.1, {4: 5}, 5.0) == (1, 4)

    def test_tie_goes_to_current(self):
        graph = ConnectivityGraph()
        graph.add_fragment(0, 0.1)
        graph.add_fragment(1, 0.2)
        graph.link(0, 1, 0)
        assert select_fragment_goal(graph, 0, 0.1, {0: 5}, 5.0) == (0, None)

    def test_tie_between_neighbors_goes_to_lowest_id(self):
        graph = ConnectivityGraph()
        for node in range(3):
            graph.add_fragment(node, 0.4)
        graph.link(0, 2, 0)
        graph.link(0, 1, 1)
        assert select_fragment_goal(graph, 0, 0.0, {0: 3, 1: 3}, 1.0) == (1, 1)

    def test_overrides_mark_exhausted(self):
        graph = ConnectivityGraph()
        graph.add_fragment(0, 0.0)
        graph.add_fragment(1, 0.9)
        graph.link(0, 1, 0)
        assert select_fragment_goal(graph, 0, 0.0, {0: 1}, 5.0, {1: 0.0}) == (0, None)

    def test_matches_exhaustive_argmax(self):
        rng = np.random.default_rng(6)
        for _ in range(500):
            graph = ConnectivityGraph()
            n = int(rng.integers(1, 7))
            for node in range(n):
                graph.add_fragment(node, float(rng.integers(0, 5)) / 4)
            fracture_id = 0
            for a in range(n):
                for b in range(a + 1, n):
                    if rng.random() < 0.5:
                        graph.link(a, b, fracture_id)
                        fracture_id += 1
            current = int(rng.integers(n))
            distances = {f: int(rng.integers(0, 12)) for _, f in graph.neighbors(current)}
            q_current = float(rng.integers(0, 5)) / 4
            epsilon = float(rng.choice([1.0, 5.0, 15.0]))
            goal, route = select_fragment_goal(graph, current, q_current, distances, epsilon)
            assert goal == exhaustive_goal(graph, current, q_current, distances, epsilon)
            if goal == current:
                assert route is None
            else:
                assert (goal, route) in graph.neighbors(current)

            scaled = ConnectivityGraph.from_dict(graph.to_dict())
            for node in scaled.fragments:
                scaled.set_q(node, 3.0 * graph.q(node))
            assert select_fragment_goal(scaled, current, 3.0 * q_current, distances, epsilon)[0] == goal


class TestFractureBorder:
    def test_width_one_corridor(self):
        local_map = corridor_map(1)
        assert make_fracture_border(local_map, (3, 1), Heading.NORTH) == [(3, 1)]

    def test_doorway_of_three(self):
        local_map = corridor_map(3)
        assert make_fracture_border(local_map, (3, 2), Heading.SOUTH) == [(3, 3), (3, 2), (3, 1)]
        assert make_fracture_border(local_map, (3, 2), Heading.NORTH) == [(3, 1), (3, 2), (3, 3)]

    def test_stops_at_unknown(self):
        local_map = corridor_map(5)
        local_map.occupancy[3, 5] = Occupancy.UNKNOWN
        assert make_fracture_border(local_map, (3, 3), Heading.NORTH) == [(3, 1), (3, 2), (3, 3), (3, 4)]

    def test_matches_brute_force_scan(self, make_partial_map):
        rng = np.random.default_rng(7)
        for _ in range(200):
            local_map = make_partial_map(rng)
            heading = Heading(int(rng.integers(4)))
            pos = local_map.agent_pos
            border = make_fracture_border(local_map, pos, heading)
            assert set(border) == set(brute_force_border(local_map, pos, heading))
            assert pos in border
            assert all(manhattan(a, b) == 1 for a, b in zip(border, border[1:]))

    def test_check_recall(self):
        local_map = corridor_map(3)
        local_map.fracture_points.append(FracturePoint(0, (3, 2), [(3, 1), (3, 2), (3, 3)], 4))
        assert check_recall(local_map, (3, 1)) == 4
        assert check_recall(local_map, (0, 2)) is None

    def test_pairwise_distances(self):
        points = [FracturePoint(0, (0, 0), [], 1), FracturePoint(1, (2, 3), [], 2)]
        assert pairwise_distances(points) == {(0, 1): 5, (1, 0): 5}
