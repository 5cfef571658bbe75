import numpy as np
import pandas as pd
import pytest

from episode_runner import episode_environment, run_episode, write_episode
from exceptions import RenderError
from map_io import save_environment
from map_renderer import (
    EMPTY_COLOR, FRACTURE_COLOR, FRAGMENT_PALETTE, OVERLAP_COLOR, graph_dot, metrics_chart,
    overlap_cells, ppm_bytes, raster, render_episode,
)
from settings import AgentConfig


def test_raster_zoom_and_colors(room):
    env = room.env
    trajectory = pd.DataFrame({"step": [0, 1], "x": [2, 3], "y": [2, 2], "fragment": [0, 1]})
    image = raster(env, trajectory, [{"x": 4, "y": 3}], zoom=3)
    assert image.shape == (env.height * 3, env.width * 3, 3)
    assert tuple(image[2 * 3, 2 * 3]) == tuple(FRAGMENT_PALETTE[0])
    assert tuple(image[2 * 3 + 2, 3 * 3 + 2]) == tuple(FRAGMENT_PALETTE[1])
    assert tuple(image[3 * 3, 4 * 3]) == FRACTURE_COLOR
    assert tuple(image[5 * 3, 6 * 3]) == EMPTY_COLOR
    assert tuple(image[0, 0]) == tuple(env.colors[0, 0])


def test_overlap_cells():
    trajectory = pd.DataFrame({
        "step": range(6), "x": [1, 2, 3, 2, 1, 1], "y": [1, 1, 1, 1, 1, 1], "fragment": [0, 0, 1, 1, 2, 0],
    })
    shared = overlap_cells(trajectory)
    assert shared.to_dict("records") == [
        {"x": 1, "y": 1, "fragments": "0;2"},
        {"x": 2, "y": 1, "fragments": "0;1"},
    ]
    assert overlap_cells(trajectory.iloc[:3]).empty


def test_raster_marks_overlap(room):
    trajectory = pd.DataFrame({"step": [0, 1, 2], "x": [2, 3, 2], "y": [2, 2, 2], "fragment": [0, 0, 1]})
    image = raster(room.env, trajectory, zoom=1)
    assert tuple(image[2, 2]) == OVERLAP_COLOR
    assert tuple(image[2, 3]) == tuple(FRAGMENT_PALETTE[0])


def test_raster_rejects_bad_zoom(room):
    with pytest.raises(RenderError):
        raster(room.env, zoom=0)


def test_ppm_header_and_payload():
    image = np.zeros((4, 6, 3), dtype=np.uint8)
    image[1, 2] = (9, 8, 7)
    data = ppm_bytes(image)
    header = b"P6\n6 4\n255\n"
    assert data.startswith(header)
    assert len(data) == len(header) + 4 * 6 * 3
    offset = len(header) + (1 * 6 + 2) * 3
    assert data[offset:offset + 3] == bytes([9, 8, 7])


def test_graph_dot():
    graph = {"nodes": [{"id": 0, "q": 0.25}, {"id": 1, "q": 0.0}], "edges": [{"a": 0, "b": 1, "fracture_id": 0}]}
    dot = graph_dot(graph, current=1)
    assert dot.startswith("graph fragments {")
    assert "f0 -- f1" in dot
    assert "f1 [" in dot and "style=bold" in dot.split("f1 [")[1].splitlines()[0]
    assert graph_dot({}) == "graph fragments {\n  node [shape=circle];\n}\n"


def test_metrics_chart_is_svg():
    metrics = pd.DataFrame({"step": [0, 1, 2], "coverage_pct": [0.0, 50.0, 80.0], "stm_cells": [10, 30, 20]})
    svg = metrics_chart(metrics)
    assert svg.startswith("<?xml") and svg.rstrip().endswith("</svg>")
    assert svg.count("<polyline") == 2
    assert "max 30" in svg


def test_render_episode(tmp_path, two_rooms):
    env_path = str(tmp_path / "two_rooms.json")
    save_environment(two_rooms.env, env_path)
    result = run_episode(two_rooms.env, AgentConfig(), seed=1, step_budget=200)
    directory = write_episode(result, str(tmp_path / "run"))

    paths = render_episode(directory, env_path, str(tmp_path / "render"), zoom=2)
    with open(paths["ppm"], "rb") as f:
        assert f.read().startswith(f"P6\n{two_rooms.env.width * 2} {two_rooms.env.height * 2}\n255\n".encode())
    with open(paths["dot"]) as f:
        assert f.read().count(" [label=\"") >= 1
    with open(paths["svg"]) as f:
        assert "<svg" in f.read()


def read_ppm(path):
    with open(path, "rb") as f:
        data = f.read()
    _, size, _, payload = data.split(b"\n", 3)
    width, height = (int(v) for v in size.split())
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)


def test_render_uses_episode_colors_and_lists_overlap(tmp_path, two_rooms):
    env_path = str(tmp_path / "two_rooms.json")
    save_environment(two_rooms.env, env_path)
    result = run_episode(two_rooms.env, AgentConfig(), seed=3, step_budget=300)
    directory = write_episode(result, str(tmp_path / "run"))

    paths = render_episode(directory, env_path, str(tmp_path / "render"), zoom=1)
    image = read_ppm(paths["ppm"])
    colored, _, _ = episode_environment(two_rooms.env, 3)
    walls = colored.occupied
    np.testing.assert_array_equal(image[walls], colored.colors[walls])
    assert not np.array_equal(colored.colors[walls], two_rooms.env.colors[walls])

    overlap = pd.read_csv(paths["overlap"])
    assert list(overlap.columns) == ["x", "y", "fragments"]
    expected = overlap_cells(pd.DataFrame(result.trajectory))
    assert len(overlap) == len(expected)


def test_render_missing_episode(tmp_path, room):
    env_path = str(tmp_path / "room.json")
    save_environment(room.env, env_path)
    with pytest.raises(RenderError):
        render_episode(str(tmp_path / "missing"), env_path)
