"""
Map Renderer
------------
Headless episode pictures: a PPM (P6) raster of the environment, walls in
the episode's colours, with the trajectory coloured by fragment, cells
shared by fragments and the fracture points marked; a DOT file of the
connectivity graph; an SVG line chart of coverage and memory; and a CSV of
the shared cells.
"""

import json
import logging
import os
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from episode_runner import episode_environment
from exceptions import RenderError
from fragment_memory import ConnectivityGraph
from map_io import load_environment
from models import GridEnvironment

logger = logging.getLogger(__name__)

EMPTY_COLOR = (235, 235, 235)
FRACTURE_COLOR = (0, 0, 0)
OVERLAP_COLOR = (255, 215, 0)

FRAGMENT_PALETTE = np.array([
    (31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40),
    (148, 103, 189), (140, 86, 75), (227, 119, 194), (188, 189, 34),
    (23, 190, 207), (57, 59, 121), (99, 121, 57), (140, 109, 49),
], dtype=np.uint8)


def fragment_color(fragment_id: int) -> np.ndarray:
    return FRAGMENT_PALETTE[fragment_id % len(FRAGMENT_PALETTE)]


def overlap_cells(trajectory: pd.DataFrame) -> pd.DataFrame:
    """
    World cells the agent stood on under more than one fragment.

    Columns x, y, fragments (sorted ids joined by ';').
    """
    columns = ["x", "y", "fragments"]
    if trajectory is None or not len(trajectory):
        return pd.DataFrame(columns=columns)
    ids = trajectory.groupby(["y", "x"])["fragment"].unique()
    shared = ids[ids.map(len) > 1]
    rows = [
        {"x": int(x), "y": int(y), "fragments": ";".join(str(f) for f in sorted(int(i) for i in fragments))}
        for (y, x), fragments in shared.items()
    ]
    return pd.DataFrame(rows, columns=columns)


def raster(
    env: GridEnvironment,
    trajectory: Optional[pd.DataFrame] = None,
    fracture_points: Optional[List[Dict[str, Any]]] = None,
    zoom: int = 4
) -> np.ndarray:
    """
    RGB image (height * zoom, width * zoom, 3) of an episode.

    Trajectory cells take their fragment colour, cells visited under more
    than one fragment OVERLAP_COLOR, fracture points FRACTURE_COLOR.
    """
    if zoom < 1:
        raise RenderError(f"Zoom must be at least 1, got {zoom}")
    image = np.empty((env.height, env.width, 3), dtype=np.uint8)
    image[:] = EMPTY_COLOR
    image[env.occupied] = env.colors[env.occupied]

    if trajectory is not None and len(trajectory):
        xs = trajectory["x"].to_numpy()
        ys = trajectory["y"].to_numpy()
        fragments = trajectory["fragment"].to_numpy()
        image[ys, xs] = FRAGMENT_PALETTE[fragments % len(FRAGMENT_PALETTE)]
        shared = overlap_cells(trajectory)
        image[shared["y"].to_numpy(dtype=np.int64), shared["x"].to_numpy(dtype=np.int64)] = OVERLAP_COLOR

    for fp in fracture_points or []:
        image[int(fp["y"]), int(fp["x"])] = FRACTURE_COLOR

    return np.repeat(np.repeat(image, zoom, axis=0), zoom, axis=1)


def ppm_bytes(image: np.ndarray) -> bytes:
    height, width = image.shape[:2]
    return f"P6\n{width} {height}\n255\n".encode("ascii") + np.ascontiguousarray(image, dtype=np.uint8).tobytes()


def graph_dot(graph: Dict[str, Any], current: Optional[int] = None) -> str:
    return ConnectivityGraph.from_dict(graph).to_dot(current)


class SvgChart:
    """Minimal SVG line chart builder."""

    def __init__(self, width: int = 640, height: int = 320, margin: int = 40):
        self.width = width
        self.height = height
        self.margin = margin
        self.svg = ""
        self._header()

    def _header(self):
        self.svg += (
            '<?xml version="1.0" standalone="no"?>\n'
            f'<svg version="1.1" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}" xmlns="http://www.w3.org/2000/svg">\n'
            f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="white"/>\n'
        )

    def axes(self):
        m, w, h = self.margin, self.width, self.height
        self.svg += (
            f'<line x1="{m}" y1="{h - m}" x2="{w - m}" y2="{h - m}" stroke="black"/>\n'
            f'<line x1="{m}" y1="{m}" x2="{m}" y2="{h - m}" stroke="black"/>\n'
        )

    def polyline(self, xs: np.ndarray, ys: np.ndarray, x_max: float, y_max: float, stroke: str):
        m = self.margin
        plot_w, plot_h = self.width - 2 * m, self.height - 2 * m
        x_max = x_max or 1.0
        y_max = y_max or 1.0
        points = " ".join(
            f"{m + plot_w * x / x_max:.2f},{self.height - m - plot_h * y / y_max:.2f}"
            for x, y in zip(xs, ys)
        )
        self.svg += f'<polyline points="{points}" fill="none" stroke="{stroke}" stroke-width="1.5"/>\n'

    def text(self, x: float, y: float, string: str, extra: str = ""):
        self.svg += f'<text x="{x:.2f}" y="{y:.2f}" font-size="12" {extra}>{string}</text>\n'

    def get_svg(self) -> str:
        return f"{self.svg}</svg>\n"


def metrics_chart(metrics: pd.DataFrame) -> str:
    """Coverage (%) and STM cells against step, each scaled to its own maximum."""
    steps = metrics["step"].to_numpy(dtype=np.float64)
    coverage = metrics["coverage_pct"].to_numpy(dtype=np.float64)
    cells = metrics["stm_cells"].to_numpy(dtype=np.float64)

    chart = SvgChart()
    chart.axes()
    x_max = float(steps.max()) if len(steps) else 1.0
    chart.polyline(steps, coverage, x_max, 100.0, "#1f77b4")
    chart.polyline(steps, cells, x_max, float(cells.max()) if len(cells) else 1.0, "#d62728")
    chart.text(chart.margin, chart.margin - 10, "coverage %", 'fill="#1f77b4"')
    chart.text(chart.width / 2, chart.margin - 10, f"stm cells (max {int(cells.max()) if len(cells) else 0})", 'fill="#d62728"')
    chart.text(chart.width - chart.margin - 30, chart.height - chart.margin + 20, f"step {int(x_max)}")
    return chart.get_svg()


def render_episode(episode_dir: str, env_path: str, out_dir: Optional[str] = None, zoom: int = 4) -> Dict[str, str]:
    """
    Render an episode directory written by the harness.

    Walls take the colours the episode's seed gave them at the start of the
    episode. Cells visited under more than one fragment are listed in
    overlap.csv as well as marked on the raster.

    Returns:
        Dict[str, str]: artifact kind to written path

    Raises:
        RenderError: If the episode files are missing or unreadable
    """
    out_dir = out_dir or episode_dir
    try:
        env = load_environment(env_path)
        trajectory = pd.read_csv(os.path.join(episode_dir, "trajectory.csv"))
        metrics = pd.read_csv(os.path.join(episode_dir, "metrics.csv"), keep_default_na=False)
        with open(os.path.join(episode_dir, "episode.json")) as f:
            details = json.load(f)
        seed = int(details["summary"]["seed"])
    except (OSError, ValueError, KeyError, TypeError) as e:
        logger.error(f"Failed to read episode {episode_dir}: {e}")
        raise RenderError(f"Failed to read episode {episode_dir}: {e}")

    env, _, _ = episode_environment(env, seed)
    shared = overlap_cells(trajectory)
    if len(shared):
        logger.info(f"{len(shared)} cells visited under more than one fragment")

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "ppm": os.path.join(out_dir, "map.ppm"),
        "dot": os.path.join(out_dir, "graph.dot"),
        "svg": os.path.join(out_dir, "metrics.svg"),
        "overlap": os.path.join(out_dir, "overlap.csv"),
    }
    current = int(trajectory["fragment"].iloc[-1]) if len(trajectory) else None
    try:
        with open(paths["ppm"], "wb") as f:
            f.write(ppm_bytes(raster(env, trajectory, details.get("fracture_points"), zoom)))
        with open(paths["dot"], "w") as f:
            f.write(graph_dot(details.get("graph") or {}, current))
        with open(paths["svg"], "w") as f:
            f.write(metrics_chart(metrics))
        shared.to_csv(paths["overlap"], index=False)
    except OSError as e:
        raise RenderError(f"Failed to write render output: {e}")

    logger.info(f"Rendered {episode_dir} into {out_dir}")
    return paths
