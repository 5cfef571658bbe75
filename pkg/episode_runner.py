"""
Episode Runner
--------------
Runs one agent on one environment for one seed and records per-step
metrics, events and trajectory.

Episode files (one directory per episode):

    metrics.csv      step, coverage_pct, stm_cells, fragments, surprisal, z, event, elapsed_ns
    summary.csv      env, env_size, size_band, agent, seed, then the summary metrics
    events.jsonl     one record per fragmentation / recall / replan
    trajectory.csv   step, x, y, fragment
    episode.json     fracture points in world coordinates and the final connectivity graph
"""

import io
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from env_generator import size_band
from exceptions import ConfigError
from exploration_agent import ExplorationAgent, MapExplorer, build_agent
from grid_world import (
    apply_action, mutate_colors, observe, random_empty_pose, recolor_walls,
    visible_world_cells,
)
from models import EpisodeSummary, GridEnvironment, Observation, Pose, StepRecord
from settings import AgentConfig, HarnessConfig

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["step", "coverage_pct", "stm_cells", "fragments", "surprisal", "z", "event", "elapsed_ns"]
SUMMARY_COLUMNS = ["env", "size_band", "agent", "seed", "coverage_pct", "peak_mem_pct", "time_s", "frag_count", "recall_count"]
TIMING_COLUMNS = ["elapsed_ns", "time_s"]

# Keeps harness streams apart from the agent's own seed-derived streams.
_HARNESS_STREAM = 0x5EED


class CoverageRecorder:
    """Ground-truth record of every EMPTY cell that has ever been visible."""

    def __init__(self, env: GridEnvironment):
        self.env = env
        self.seen = np.zeros((env.height, env.width), dtype=bool)
        self.empty_total = max(1, env.empty_count)

    def record(self, obs: Observation):
        xs, ys = visible_world_cells(obs)
        inside = (xs >= 0) & (xs < self.env.width) & (ys >= 0) & (ys < self.env.height)
        self.seen[ys[inside], xs[inside]] = True

    @property
    def coverage_pct(self) -> float:
        covered = int(np.count_nonzero(self.seen & ~self.env.occupied))
        return 100.0 * covered / self.empty_total


@dataclass
class EpisodeResult:
    """Everything recorded for one episode."""
    env_name: str
    env_size: int
    agent_label: str
    seed: int
    records: List[StepRecord]
    summary: Optional[EpisodeSummary]
    events: List[Dict[str, Any]] = field(default_factory=list)
    trajectory: List[Dict[str, int]] = field(default_factory=list)
    fracture_points: List[Dict[str, Any]] = field(default_factory=list)
    graph: Dict[str, Any] = field(default_factory=dict)

    @property
    def key(self) -> str:
        return episode_key(self.env_name, self.agent_label, self.seed)

    def metrics_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.records], columns=METRIC_COLUMNS)

    def meta_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            "env": self.env_name,
            "env_size": self.env_size,
            "size_band": size_band(self.env_size),
            "agent": self.agent_label,
            "seed": self.seed,
        }])

    def summary_row(self) -> pd.DataFrame:
        """meta_frame with the summary metrics appended."""
        row = self.meta_frame().iloc[0].to_dict()
        if self.summary is not None:
            row.update(asdict(self.summary))
        return pd.DataFrame([row])


def episode_key(env_name: str, agent_label: str, seed: int) -> str:
    return f"{env_name}__{agent_label.replace('=', '-')}__s{seed}"


def summarize(metrics: pd.DataFrame, meta: Dict[str, Any]) -> EpisodeSummary:
    """Summary row from a metrics table; the only place summaries are computed."""
    env_size = int(meta["env_size"])
    return EpisodeSummary(
        env=str(meta["env"]),
        size_band=size_band(env_size),
        agent=str(meta["agent"]),
        seed=int(meta["seed"]),
        coverage_pct=float(metrics["coverage_pct"].iloc[-1]),
        peak_mem_pct=100.0 * float(metrics["stm_cells"].max()) / env_size,
        time_s=float(metrics["elapsed_ns"].iloc[-1]) / 1e9,
        frag_count=int((metrics["event"] == "fragment").sum()),
        recall_count=int((metrics["event"] == "recall").sum()),
    )


def episode_environment(env: GridEnvironment, seed: int) -> Tuple[GridEnvironment, Pose, np.random.Generator]:
    """
    Seeded copy of env with recoloured walls, the spawn pose and the colour
    stream that keeps mutating a dynamic map.
    """
    env = env.copy()
    spawn_rng, color_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence([seed, _HARNESS_STREAM]).spawn(2)
    )
    recolor_walls(env, color_rng)
    pose = random_empty_pose(env, spawn_rng)
    return env, pose, color_rng


def run_episode(
    env: GridEnvironment,
    agent_config: AgentConfig,
    seed: int,
    step_budget: Optional[int] = None,
    harness: Optional[HarnessConfig] = None
) -> EpisodeResult:
    """
    Run one episode.

    The environment is copied, its walls recoloured from the seed and the
    agent spawned at a seed-dependent random EMPTY cell, so every agent run
    with the same seed starts from the same pose and colours.

    Args:
        env: Ground-truth environment (not modified)
        agent_config: Agent settings; its seed is replaced by seed
        seed: Episode seed
        step_budget: Step limit; defaults to the harness budget for env
        harness: Harness settings

    Returns:
        EpisodeResult: per-step records, summary and artifacts

    Raises:
        ConfigError: If the step budget is not positive
    """
    harness = harness or HarnessConfig()
    budget = step_budget if step_budget is not None else harness.default_budget(env.empty_count)
    if budget <= 0:
        raise ConfigError(f"Step budget must be positive, got {budget}")

    env, pose, color_rng = episode_environment(env, seed)

    config = replace(agent_config, seed=seed)
    if config.spill_dir:
        config = replace(config, spill_dir=os.path.join(config.spill_dir, episode_key(env.name, config.label, seed)))
    agent = build_agent(config)
    coverage = CoverageRecorder(env)

    records: List[StepRecord] = []
    trajectory: List[Dict[str, int]] = []
    elapsed = 0
    logger.info(f"Episode {env.name} / {config.label} / seed {seed}: budget {budget}")

    for step in range(budget):
        obs = observe(env, pose, config.fov_deg, config.obs_h, config.obs_w)
        coverage.record(obs)

        started = time.perf_counter_ns()
        action = agent.step(obs)
        elapsed += time.perf_counter_ns() - started

        records.append(StepRecord(
            step=step,
            coverage_pct=coverage.coverage_pct,
            stm_cells=agent.stm_cells,
            fragments=agent.fragment_count,
            surprisal=agent.last_surprisal,
            z=agent.last_z,
            event=agent.last_event.value,
            elapsed_ns=elapsed,
        ))
        trajectory.append({"step": step, "x": pose.x, "y": pose.y, "fragment": agent.current_fragment})

        if action is None:
            break
        pose = apply_action(env, pose, action)
        mutate_colors(env, color_rng)

    result = EpisodeResult(
        env_name=env.name,
        env_size=env.size,
        agent_label=config.label,
        seed=seed,
        records=records,
        summary=None,
        events=[e.to_dict() for e in agent.events],
        trajectory=trajectory,
    )
    result.fracture_points, result.graph = _memory_artifacts(agent)
    result.summary = summarize(result.metrics_frame(), result.meta_frame().iloc[0].to_dict())

    logger.info(
        f"Episode {result.key} finished after {len(records)} steps: "
        f"coverage {result.summary.coverage_pct:.1f}%, peak memory {result.summary.peak_mem_pct:.1f}%"
    )
    return result


def _memory_artifacts(agent: ExplorationAgent):
    if not isinstance(agent, MapExplorer):
        return [], {}
    fracture_points = [
        {"fracture_id": e.fracture_id, "x": e.world_pos[0], "y": e.world_pos[1],
         "step": e.step, "fragments": [e.fragment_from, e.fragment_to]}
        for e in agent.events if e.event == "fragment"
    ]
    return fracture_points, agent.ltm.graph.to_dict()


def episode_files(result: EpisodeResult) -> Dict[str, str]:
    """File name to text for every artifact of an episode."""
    events = "".join(json.dumps(e) + "\n" for e in result.events)
    details = {
        "summary": asdict(result.summary),
        "fracture_points": result.fracture_points,
        "graph": result.graph,
    }
    return {
        "metrics.csv": _csv_text(result.metrics_frame()),
        "summary.csv": _csv_text(result.summary_row()),
        "events.jsonl": events,
        "trajectory.csv": _csv_text(pd.DataFrame(result.trajectory, columns=["step", "x", "y", "fragment"])),
        "episode.json": json.dumps(details, indent=2),
    }


def _csv_text(frame: pd.DataFrame) -> str:
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False)
    return buffer.getvalue()


def write_episode(result: EpisodeResult, out_dir: str) -> str:
    """Write an episode's files; returns the episode directory."""
    directory = os.path.join(out_dir, "episodes", result.key)
    os.makedirs(directory, exist_ok=True)
    for name, text in episode_files(result).items():
        with open(os.path.join(directory, name), "w") as f:
            f.write(text)
    return directory


def load_episode_summary(directory: str) -> EpisodeSummary:
    """Summary recomputed from an episode directory's CSV files."""
    metrics = pd.read_csv(os.path.join(directory, "metrics.csv"), keep_default_na=False)
    meta = pd.read_csv(os.path.join(directory, "summary.csv"), keep_default_na=False).iloc[0].to_dict()
    return summarize(metrics, meta)
