import os

import numpy as np
import pandas as pd
import pytest

from batch_runner import (
    DEFAULT_SWEEP_GRID, METRICS, aggregate_from_files, bootstrap_ci, prepare_suite,
    run_batch, sweep, sweep_points,
)
from env_generator import closed_room
from exceptions import ConfigError
from map_io import load_environment, save_environment
from models import AgentKind
from settings import AgentConfig, RunConfig

UNTIMED = ["env", "size_band", "agent", "seed", "coverage_pct", "peak_mem_pct", "frag_count", "recall_count"]


@pytest.fixture
def map_paths(tmp_path, room, maze):
    paths = []
    for preset in (room, maze):
        path = str(tmp_path / "maps" / f"{preset.env.name}.json")
        save_environment(preset.env, path)
        paths.append(path)
    return paths


def batch_config(paths, out_dir, seeds=(1, 2), jobs=1, budget=120) -> RunConfig:
    return RunConfig(
        env_paths=list(paths),
        agents=[AgentConfig(), AgentConfig(kind=AgentKind.FRONTIER)],
        seeds=list(seeds),
        step_budget=budget,
        out_dir=str(out_dir),
        jobs=jobs,
    )


class TestBootstrap:
    def test_constant_input(self):
        assert bootstrap_ci([3.0] * 12) == (3.0, 3.0, 3.0)

    def test_interval_brackets_the_mean(self):
        values = np.random.default_rng(0).normal(10, 2, size=40)
        lower, mean, upper = bootstrap_ci(values, n_resamples=4000)
        assert lower < mean < upper
        assert mean == pytest.approx(values.mean())
        assert upper - lower < 2.0

    def test_same_seed_same_interval(self):
        values = np.arange(25, dtype=float)
        assert bootstrap_ci(values, 3000, seed=4) == bootstrap_ci(values, 3000, seed=4)
        assert bootstrap_ci(values, 3000, seed=4) != bootstrap_ci(values, 3000, seed=5)

    def test_percentiles_of_resampled_means(self):
        values = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
        lower, mean, upper = bootstrap_ci(values, n_resamples=2000, confidence=0.9, seed=1)
        rng = np.random.default_rng(1)
        means = values[rng.integers(0, len(values), size=(2000, len(values)))].mean(axis=1)
        assert mean == 6.2
        assert values.min() <= lower < np.median(means) < upper <= values.max()
        assert lower == pytest.approx(np.quantile(means, 0.05), abs=1.0)
        assert upper == pytest.approx(np.quantile(means, 0.95), abs=1.0)

    def test_batched_resampling(self):
        values = np.random.default_rng(2).normal(size=30)
        lower, _, upper = bootstrap_ci(values, 3000, batch=500)
        assert lower < values.mean() < upper

    def test_empty(self):
        assert all(np.isnan(bootstrap_ci([])))


class TestSweepPoints:
    def test_one_at_a_time(self):
        points = sweep_points()
        assert len(points) == sum(len(v) for v in DEFAULT_SWEEP_GRID.values())
        assert all(len(p) == 1 for p in points)

    def test_cartesian(self):
        points = sweep_points({"rho": [1.0, 2.0], "gamma": [0.8, 0.9, 0.95]}, cartesian=True)
        assert len(points) == 6
        assert points[0] == {"gamma": 0.8, "rho": 1.0}

    def test_unknown_parameter(self):
        with pytest.raises(ConfigError):
            sweep_points({"fov_deg": [90.0]})


@pytest.mark.asyncio
async def test_batch_writes_every_episode(map_paths, tmp_path, fast_harness):
    out = tmp_path / "run"
    result = await run_batch(batch_config(map_paths, out), fast_harness)
    assert len(result.summary) == 2 * 2 * 2
    assert len(result.episode_dirs) == 8
    for name in ("summary.csv", "groups.csv", "ratios.csv"):
        assert (out / name).exists()
    assert set(result.groups["agent"]) == {"farmap", "frontier"}
    assert (result.groups["N"] == 4).all()
    for metric in METRICS:
        assert (result.groups[f"{metric}_lower"] <= result.groups[f"{metric}_upper"]).all()


@pytest.mark.asyncio
async def test_aggregate_from_files_matches_batch(map_paths, tmp_path, fast_harness):
    out = tmp_path / "run"
    result = await run_batch(batch_config(map_paths, out), fast_harness)
    rebuilt = aggregate_from_files(str(out), fast_harness)
    pd.testing.assert_frame_equal(rebuilt.summary[UNTIMED], result.summary[UNTIMED], check_dtype=False)
    pd.testing.assert_frame_equal(
        rebuilt.groups[["size_band", "agent", "N", "coverage_pct_mean"]],
        result.groups[["size_band", "agent", "N", "coverage_pct_mean"]],
        check_dtype=False,
    )


@pytest.mark.asyncio
async def test_parallel_matches_serial(map_paths, tmp_path, fast_harness):
    serial = await run_batch(batch_config(map_paths, tmp_path / "serial"), fast_harness)
    parallel = await run_batch(batch_config(map_paths, tmp_path / "parallel", jobs=2), fast_harness)
    pd.testing.assert_frame_equal(serial.summary[UNTIMED], parallel.summary[UNTIMED])
    for a, b in zip(serial.episode_dirs, parallel.episode_dirs):
        assert os.path.basename(a) == os.path.basename(b)
        for name in ("trajectory.csv", "events.jsonl"):
            with open(os.path.join(a, name)) as fa, open(os.path.join(b, name)) as fb:
                assert fa.read() == fb.read()


@pytest.mark.asyncio
async def test_seed_order_does_not_matter(map_paths, tmp_path, fast_harness):
    a = await run_batch(batch_config(map_paths, tmp_path / "a", seeds=(1, 2, 3)), fast_harness)
    b = await run_batch(batch_config(map_paths, tmp_path / "b", seeds=(3, 1, 2)), fast_harness)
    pd.testing.assert_frame_equal(a.summary[UNTIMED], b.summary[UNTIMED])


@pytest.mark.asyncio
async def test_batch_without_maps(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(ConfigError):
        await run_batch(batch_config([str(tmp_path / "empty")], tmp_path / "out"))


@pytest.mark.asyncio
async def test_default_sweep_tables(tmp_path, fast_harness):
    path = str(tmp_path / "room.json")
    save_environment(closed_room(8, 6, seed=1).env, path)
    config = RunConfig(env_paths=[path], agents=[AgentConfig()], seeds=[0], step_budget=25,
                       out_dir=str(tmp_path / "sweep"))
    tables = await sweep(config, fast_harness)
    assert {name: len(table) for name, table in tables.items()} == {"rho": 5, "gamma": 4, "epsilon": 5}
    assert tables["rho"]["rho"].tolist() == DEFAULT_SWEEP_GRID["rho"]
    for name in tables:
        assert (tmp_path / "sweep" / f"sweep_{name}.csv").exists()


@pytest.mark.asyncio
async def test_sweep_leaves_reference_agents_alone(tmp_path, fast_harness):
    path = str(tmp_path / "room.json")
    save_environment(closed_room(8, 6, seed=1).env, path)
    config = RunConfig(env_paths=[path], agents=[AgentConfig(), AgentConfig(kind=AgentKind.FRONTIER)],
                       seeds=[0], step_budget=25, out_dir=str(tmp_path / "sweep"))
    tables = await sweep(config, fast_harness, grid={"gamma": [0.8, 0.95]})
    frontier = tables["gamma"][tables["gamma"]["agent"] == "frontier"]
    assert len(frontier) == 2
    assert frontier["coverage_pct"].nunique() == 1


def test_prepare_suite(tmp_path):
    paths = prepare_suite(str(tmp_path), runs=2, seed=3, keep_largest=2, dynamic=True)
    assert 1 <= len(paths) <= 2
    assert all(load_environment(p).dynamic for p in paths)
    assert (tmp_path / "maps" / "manifest.json").exists()
