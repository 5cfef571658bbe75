"""
FARMap command line
-------------------
farmap gen|run|batch|sweep|render

Settings come from FARMAP_* environment variables (and .env); command-line
flags override them. Domain errors exit with code 1 and one JSON line on
stderr, argument errors with code 2.
"""

import argparse
import asyncio
import json
import logging
import os
import sys
from dataclasses import replace
from typing import Dict, List, Optional

import console_report
from batch_runner import DEFAULT_SWEEP_GRID, prepare_suite, run_batch, sweep
from env_generator import generate_suite
from episode_runner import run_episode, write_episode
from exceptions import ConfigError, FarmapError
from map_io import load_environment, write_suite
from map_renderer import render_episode
from settings import AgentConfig, Config, RunConfig

logger = logging.getLogger(__name__)

DEFAULT_AGENTS = ["farmap", "frontier"]


def _add_agent_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--agent", action="append", metavar="SPEC",
                        help="farmap | frontier | random | farmap-randfrag=<p> | farmap-unifrag=<L>")
    parser.add_argument("--gamma", type=float, help="confidence decay")
    parser.add_argument("--rho", type=float, help="z-score fragmentation threshold")
    parser.add_argument("--epsilon", type=float, help="stay-in-fragment preference")
    parser.add_argument("--fov", type=float, help="field of view in degrees")
    parser.add_argument("--obs", type=int, help="observation window side (odd)")
    parser.add_argument("--low-z-gate", type=float, nargs="?", const=-1.0, default=None, metavar="Z",
                        help="only take LTM subgoals while z < Z (default -1)")
    parser.add_argument("--budget-multiplier", type=float, help="step budget per empty cell")
    parser.add_argument("--steps", type=int, help="fixed step budget")
    parser.add_argument("--out", help="output directory")


def _add_env_selection(parser: argparse.ArgumentParser):
    parser.add_argument("--env", action="append", metavar="PATH",
                        help="map file, map directory or manifest (repeatable)")
    parser.add_argument("--suite", choices=["static", "dynamic"], help="generate a map suite for this batch")
    parser.add_argument("--runs", type=int, default=10, help="generation runs for --suite")
    parser.add_argument("--suite-seed", type=int, default=0, help="generation seed for --suite")
    parser.add_argument("--band", choices=["small", "medium", "large"], help="size band filter for --suite")
    parser.add_argument("--keep", type=int, help="keep the N largest generated maps")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0], help="episode seeds")
    parser.add_argument("--jobs", type=int, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="farmap", description="Fragmentation-and-recall map exploration.")
    parser.add_argument("--env-file", help="load settings from this .env file")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen", help="generate a map suite")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--count", type=int, default=1, help="generation runs")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--dynamic", action="store_true", help="mark maps for colour mutation")
    gen.add_argument("--band", choices=["small", "medium", "large"])
    gen.add_argument("--keep", type=int, help="keep the N largest maps")

    run = commands.add_parser("run", help="run one episode")
    run.add_argument("--env", required=True, metavar="PATH", help="map file")
    run.add_argument("--seed", type=int, default=0)
    _add_agent_flags(run)

    batch = commands.add_parser("batch", help="run environments x seeds x agents")
    _add_env_selection(batch)
    _add_agent_flags(batch)

    sweep_parser = commands.add_parser("sweep", help="hyperparameter sweep")
    _add_env_selection(sweep_parser)
    _add_agent_flags(sweep_parser)
    sweep_parser.add_argument("--param", action="append", metavar="NAME=V1,V2",
                              help="sweep values for rho, gamma or epsilon (repeatable)")
    sweep_parser.add_argument("--cartesian", action="store_true", help="sweep the product of all values")

    render = commands.add_parser("render", help="render an episode directory")
    render.add_argument("--episode", required=True, help="episode directory")
    render.add_argument("--env", required=True, metavar="PATH", help="map file of the episode")
    render.add_argument("--zoom", type=int, default=4)
    render.add_argument("--out", help="output directory (default: the episode directory)")

    return parser


def parse_grid(params: Optional[List[str]]) -> Optional[Dict[str, List[float]]]:
    """Parse repeated NAME=V1,V2 sweep flags."""
    if not params:
        return None
    grid = {}
    for param in params:
        name, _, values = param.partition("=")
        if name not in DEFAULT_SWEEP_GRID or not values:
            raise ConfigError(f"Invalid sweep parameter: {param}")
        try:
            grid[name] = [float(v) for v in values.split(",")]
        except ValueError:
            raise ConfigError(f"Invalid sweep values: {param}")
    return grid


class FarmapCli:
    """Runs one parsed command against the loaded configuration."""

    def __init__(self, config: Config):
        self.config = config

    def agent_base(self, args: argparse.Namespace) -> AgentConfig:
        overrides = {
            "gamma": args.gamma,
            "rho": args.rho,
            "epsilon": args.epsilon,
            "fov_deg": args.fov,
            "low_z_gate": args.low_z_gate,
        }
        if args.obs is not None:
            overrides["obs_h"] = overrides["obs_w"] = args.obs
        return replace(self.config.agent, **{k: v for k, v in overrides.items() if v is not None})

    def agents(self, args: argparse.Namespace) -> List[AgentConfig]:
        base = self.agent_base(args)
        agents = [AgentConfig.from_spec(spec, base) for spec in (args.agent or DEFAULT_AGENTS)]
        for agent in agents:
            agent.validate()
        return agents

    def harness(self, args: argparse.Namespace):
        harness = self.config.harness
        if args.budget_multiplier is not None:
            harness = replace(harness, budget_multiplier=args.budget_multiplier)
        if getattr(args, "jobs", None) is not None:
            harness = replace(harness, jobs=args.jobs)
        return harness

    def out_dir(self, args: argparse.Namespace) -> str:
        return args.out or self.config.harness.out_dir

    def run_config(self, args: argparse.Namespace) -> RunConfig:
        out_dir = self.out_dir(args)
        env_paths = list(args.env or [])
        if args.suite:
            env_paths.extend(prepare_suite(
                out_dir, args.runs, args.suite_seed, args.keep, args.band, args.suite == "dynamic"
            ))
        if not env_paths:
            raise ConfigError("Provide --env or --suite")
        return RunConfig(
            env_paths=env_paths,
            agents=self.agents(args),
            seeds=list(args.seeds),
            step_budget=args.steps,
            out_dir=out_dir,
            jobs=self.harness(args).jobs,
        )

    def gen(self, args: argparse.Namespace):
        environments = generate_suite(args.count, args.seed, args.keep, args.band, args.dynamic)
        if not environments:
            logger.warning("Generation produced no maps")
        manifest = write_suite(environments, args.out)
        console_report.show_suite(environments, manifest)

    def run(self, args: argparse.Namespace):
        if args.agent and len(args.agent) > 1:
            raise ConfigError("run takes a single --agent")
        env = load_environment(args.env)
        agent = self.agents(args)[0]
        result = run_episode(env, agent, args.seed, args.steps, self.harness(args))
        directory = write_episode(result, self.out_dir(args))
        console_report.show_episode(vars(result.summary), directory)

    async def batch(self, args: argparse.Namespace):
        result = await run_batch(self.run_config(args), self.harness(args))
        console_report.show_batch(result)

    async def sweep(self, args: argparse.Namespace):
        tables = await sweep(self.run_config(args), self.harness(args), parse_grid(args.param), args.cartesian)
        console_report.show_sweep(tables)

    def render(self, args: argparse.Namespace):
        console_report.show_render(render_episode(args.episode, args.env, args.out, args.zoom))

    def dispatch(self, args: argparse.Namespace):
        if args.command in ("batch", "sweep"):
            asyncio.run(getattr(self, args.command)(args))
        else:
            getattr(self, args.command)(args)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = Config.load(args.env_file) if args.env_file else Config.from_env()
        config.validate()
        config.setup_logging()
        if getattr(args, "out", None):
            os.makedirs(args.out, exist_ok=True)
        FarmapCli(config).dispatch(args)
    except FarmapError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
