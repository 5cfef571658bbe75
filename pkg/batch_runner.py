"""
Batch Runner
------------
Runs every (environment x seed x agent) episode of a batch, writes the
episode files asynchronously and reduces them into summary tables:
per-episode summary, per size band means with bootstrap confidence
intervals, and memory/coverage and time/coverage ratio tables.

Also drives hyperparameter sweeps on top of run_batch.
"""

import asyncio
import itertools
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import aiofiles
import numpy as np
import pandas as pd
from scipy import stats

from env_generator import generate_suite
from episode_runner import (
    SUMMARY_COLUMNS, episode_files, load_episode_summary, run_episode,
)
from exceptions import ConfigError, FarmapError
from map_io import load_environment, resolve_env_paths, write_suite
from models import AgentKind, EpisodeSummary
from settings import AgentConfig, HarnessConfig, RunConfig

logger = logging.getLogger(__name__)

METRICS = ["coverage_pct", "peak_mem_pct", "time_s", "frag_count", "recall_count"]

UNSWEPT_KINDS = (AgentKind.FRONTIER, AgentKind.RANDOM_EXPLORE)

DEFAULT_SWEEP_GRID: Dict[str, List[float]] = {
    "rho": [1.0, 1.5, 2.0, 2.5, 3.0],
    "gamma": [0.8, 0.9, 0.95, 0.99],
    "epsilon": [1.0, 3.0, 5.0, 10.0, 15.0],
}


@dataclass
class EpisodeJob:
    """One episode, picklable for worker processes."""
    env_path: str
    agent: AgentConfig
    seed: int
    step_budget: Optional[int]
    harness: HarnessConfig


@dataclass
class BatchResult:
    """Summary tables of a batch."""
    summary: pd.DataFrame
    groups: pd.DataFrame
    ratios: pd.DataFrame
    out_dir: str = ""
    episode_dirs: List[str] = field(default_factory=list)


def _run_job(job: EpisodeJob) -> Tuple[str, Dict[str, str], EpisodeSummary]:
    env = load_environment(job.env_path)
    result = run_episode(env, job.agent, job.seed, job.step_budget, job.harness)
    return result.key, episode_files(result), result.summary


def bootstrap_ci(
    values: Sequence[float],
    n_resamples: int = 10_000,
    confidence: float = 0.95,
    seed: int = 0,
    batch: Optional[int] = None
) -> Tuple[float, float, float]:
    """
    Percentile bootstrap of the mean.

    batch caps how many resamples are held in memory at once.

    Returns:
        Tuple[float, float, float]: (lower, mean, upper)
    """
    data = np.asarray(values, dtype=np.float64)
    if data.size == 0:
        return float("nan"), float("nan"), float("nan")
    mean = float(data.mean())
    if np.ptp(data) == 0:
        return float(data[0]), float(data[0]), float(data[0])

    result = stats.bootstrap(
        (data,),
        np.mean,
        n_resamples=n_resamples,
        batch=batch,
        confidence_level=confidence,
        method="percentile",
        random_state=np.random.default_rng(seed),
    )
    interval = result.confidence_interval
    return float(interval.low), mean, float(interval.high)


def summary_frame(summaries: List[EpisodeSummary]) -> pd.DataFrame:
    rows = [{column: getattr(s, column) for column in SUMMARY_COLUMNS} for s in summaries]
    frame = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
    return frame.sort_values(["env", "agent", "seed"], kind="stable").reset_index(drop=True)


def group_table(summary: pd.DataFrame, harness: HarnessConfig) -> pd.DataFrame:
    """Mean and bootstrap CI of each metric per (size band, agent)."""
    rows = []
    for (band, agent), group in summary.groupby(["size_band", "agent"], sort=True):
        row = {"size_band": band, "agent": agent, "N": len(group)}
        for metric in METRICS:
            lower, mean, upper = bootstrap_ci(
                group[metric].to_numpy(), harness.bootstrap_samples, harness.confidence
            )
            row[f"{metric}_mean"] = mean
            row[f"{metric}_lower"] = lower
            row[f"{metric}_upper"] = upper
        rows.append(row)
    return pd.DataFrame(rows)


def ratio_table(summary: pd.DataFrame) -> pd.DataFrame:
    """Mean peak memory and agent time per unit of mean coverage."""
    rows = []
    for (band, agent), group in summary.groupby(["size_band", "agent"], sort=True):
        coverage = group["coverage_pct"].mean()
        rows.append({
            "size_band": band,
            "agent": agent,
            "memory_per_coverage": group["peak_mem_pct"].mean() / coverage if coverage else float("nan"),
            "time_per_coverage": group["time_s"].mean() / coverage if coverage else float("nan"),
        })
    return pd.DataFrame(rows)


def reduce_summaries(summaries: List[EpisodeSummary], harness: HarnessConfig, out_dir: str = "") -> BatchResult:
    summary = summary_frame(summaries)
    return BatchResult(
        summary=summary,
        groups=group_table(summary, harness),
        ratios=ratio_table(summary),
        out_dir=out_dir,
    )


async def _write_text(path: str, text: str):
    async with aiofiles.open(path, "w") as f:
        await f.write(text)


async def _write_episode(out_dir: str, key: str, files: Dict[str, str]) -> str:
    directory = os.path.join(out_dir, "episodes", key)
    os.makedirs(directory, exist_ok=True)
    await asyncio.gather(*(
        _write_text(os.path.join(directory, name), text) for name, text in files.items()
    ))
    return directory


async def write_tables(result: BatchResult):
    """Write summary.csv, groups.csv and ratios.csv into the batch directory."""
    await asyncio.gather(
        _write_text(os.path.join(result.out_dir, "summary.csv"), result.summary.to_csv(index=False)),
        _write_text(os.path.join(result.out_dir, "groups.csv"), result.groups.to_csv(index=False)),
        _write_text(os.path.join(result.out_dir, "ratios.csv"), result.ratios.to_csv(index=False)),
    )


async def run_batch(run_config: RunConfig, harness: Optional[HarnessConfig] = None) -> BatchResult:
    """
    Run every (environment x seed x agent) episode of a batch.

    Episodes go to a process pool when run_config.jobs > 1 and run inline
    otherwise; results are reduced in submission order so both paths give
    identical files apart from timing columns.

    Args:
        run_config: Environments, agents, seeds, budget, output directory
        harness: Harness settings (bootstrap, budget defaults)

    Returns:
        BatchResult: summary, band and ratio tables

    Raises:
        ConfigError: If the run configuration is invalid
    """
    harness = harness or HarnessConfig()
    run_config.validate()
    env_paths = resolve_env_paths(run_config.env_paths)
    if not env_paths:
        raise ConfigError("No environment files found")

    jobs = [
        EpisodeJob(path, agent, seed, run_config.step_budget, harness)
        for path in env_paths
        for seed in run_config.seeds
        for agent in run_config.agents
    ]
    logger.info(f"Running {len(jobs)} episodes with {run_config.jobs} worker(s)")

    if run_config.jobs == 1:
        outcomes = [_run_job(job) for job in jobs]
    else:
        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=run_config.jobs) as pool:
            outcomes = await asyncio.gather(*(
                loop.run_in_executor(pool, _run_job, job) for job in jobs
            ))

    os.makedirs(run_config.out_dir, exist_ok=True)
    directories = await asyncio.gather(*(
        _write_episode(run_config.out_dir, key, files) for key, files, _ in outcomes
    ))

    result = reduce_summaries([summary for _, _, summary in outcomes], harness, run_config.out_dir)
    result.episode_dirs = list(directories)
    await write_tables(result)
    logger.info(f"Batch complete: {len(outcomes)} episodes written to {run_config.out_dir}")
    return result


def aggregate_from_files(out_dir: str, harness: Optional[HarnessConfig] = None) -> BatchResult:
    """Rebuild the batch tables from the episode CSV files under out_dir."""
    harness = harness or HarnessConfig()
    episodes_dir = os.path.join(out_dir, "episodes")
    if not os.path.isdir(episodes_dir):
        raise FarmapError(f"No episodes under {out_dir}")
    directories = [os.path.join(episodes_dir, name) for name in sorted(os.listdir(episodes_dir))]
    result = reduce_summaries([load_episode_summary(d) for d in directories], harness, out_dir)
    result.episode_dirs = directories
    return result


def prepare_suite(
    out_dir: str,
    runs: int,
    seed: int,
    keep_largest: Optional[int] = None,
    band: Optional[str] = None,
    dynamic: bool = False
) -> List[str]:
    """Generate a map suite into out_dir/maps and return the map paths."""
    environments = generate_suite(runs, seed, keep_largest, band, dynamic)
    maps_dir = os.path.join(out_dir, "maps")
    write_suite(environments, maps_dir)
    return [os.path.join(maps_dir, f"{env.name}.json") for env in environments]


def sweep_points(grid: Optional[Dict[str, List[float]]] = None, cartesian: bool = False) -> List[Dict[str, float]]:
    """
    Hyperparameter settings of a sweep.

    The default grid varies one parameter at a time around the defaults;
    cartesian=True takes the product of all given value lists.
    """
    grid = grid or DEFAULT_SWEEP_GRID
    for name in grid:
        if name not in DEFAULT_SWEEP_GRID:
            raise ConfigError(f"Cannot sweep over '{name}'")
    names = sorted(grid)
    if cartesian:
        return [dict(zip(names, values)) for values in itertools.product(*(grid[n] for n in names))]
    return [{name: value} for name in names for value in grid[name]]


def _point_label(point: Dict[str, float]) -> str:
    return "_".join(f"{name}={point[name]:g}" for name in sorted(point))


async def sweep(
    run_config: RunConfig,
    harness: Optional[HarnessConfig] = None,
    grid: Optional[Dict[str, List[float]]] = None,
    cartesian: bool = False
) -> Dict[str, pd.DataFrame]:
    """
    Run one batch per sweep point and tabulate metric means.

    Only FARMap-family agents take the swept values; other agents in the
    batch run unchanged as reference rows.

    Returns:
        Dict[str, pd.DataFrame]: one table per swept parameter, or a single
        "grid" table for cartesian sweeps; rows sorted by parameter values
    """
    harness = harness or HarnessConfig()
    rows: List[Dict[str, object]] = []

    for point in sweep_points(grid, cartesian):
        agents = [
            replace(agent, **point) if agent.kind not in UNSWEPT_KINDS else agent
            for agent in run_config.agents
        ]
        point_config = replace(
            run_config,
            agents=agents,
            out_dir=os.path.join(run_config.out_dir, "sweep", _point_label(point)),
        )
        result = await run_batch(point_config, harness)
        for agent, group in result.summary.groupby("agent", sort=True):
            row: Dict[str, object] = dict(point)
            row["agent"] = agent
            for metric in METRICS:
                row[metric] = float(group[metric].mean())
            rows.append(row)

    frame = pd.DataFrame(rows)
    tables: Dict[str, pd.DataFrame] = {}
    if cartesian:
        names = sorted((grid or DEFAULT_SWEEP_GRID).keys())
        tables["grid"] = frame.sort_values(names + ["agent"], kind="stable").reset_index(drop=True)
    else:
        for name in sorted((grid or DEFAULT_SWEEP_GRID).keys()):
            subset = frame[frame[name].notna()] if name in frame else frame.iloc[0:0]
            columns = [name, "agent"] + METRICS
            tables[name] = subset[columns].sort_values([name, "agent"], kind="stable").reset_index(drop=True)

    os.makedirs(run_config.out_dir, exist_ok=True)
    await asyncio.gather(*(
        _write_text(os.path.join(run_config.out_dir, f"sweep_{name}.csv"), table.to_csv(index=False))
        for name, table in tables.items()
    ))
    return tables
