"""Console tables for batch, sweep and generation results."""

import logging
from typing import Dict, List, Optional

import pandas as pd
from rich.console import Console
from rich.table import Table

from batch_runner import METRICS, BatchResult
from models import GridEnvironment

logger = logging.getLogger(__name__)
console = Console()


def _cell(value) -> str:
    if isinstance(value, float):
        return "N/A" if pd.isna(value) else f"{value:.2f}"
    return str(value)


def frame_table(frame: pd.DataFrame, title: str, key_columns: Optional[List[str]] = None) -> Table:
    """Rich table mirroring a DataFrame; key columns are highlighted."""
    key_columns = key_columns or []
    table = Table(title=title)
    for column in frame.columns:
        if column in key_columns:
            table.add_column(column, style="cyan")
        else:
            table.add_column(column, justify="right")
    for row in frame.itertuples(index=False):
        table.add_row(*(_cell(value) for value in row))
    return table


def group_summary_table(groups: pd.DataFrame, title: str = "Exploration by size band") -> Table:
    """Metric means with their confidence interval as one column per metric."""
    table = Table(title=title)
    table.add_column("Band", style="cyan")
    table.add_column("Agent", style="green")
    table.add_column("N", justify="right")
    for metric in METRICS:
        table.add_column(metric, justify="right")

    for _, row in groups.iterrows():
        cells = [
            f"{row[f'{m}_mean']:.2f} [{row[f'{m}_lower']:.2f}, {row[f'{m}_upper']:.2f}]"
            for m in METRICS
        ]
        table.add_row(str(row["size_band"]), str(row["agent"]), str(row["N"]), *cells)
    return table


def show_batch(result: BatchResult):
    if result.groups.empty:
        console.print("No episodes were run.")
        return
    console.print(group_summary_table(result.groups))
    console.print(frame_table(result.ratios, "Cost per unit coverage", ["size_band", "agent"]))
    if result.out_dir:
        console.print(f"\nResults written to {result.out_dir}")


def show_episode(summary_row: Dict[str, object], directory: str):
    table = Table(title="Episode")
    table.add_column("Field", style="cyan")
    table.add_column("Value", justify="right")
    for key, value in summary_row.items():
        table.add_row(key, _cell(value))
    console.print(table)
    console.print(f"\nEpisode files in {directory}")


def show_sweep(tables: Dict[str, pd.DataFrame]):
    for name, frame in tables.items():
        console.print(frame_table(frame, f"Sweep: {name}", [name, "agent"]))


def show_suite(environments: List[GridEnvironment], manifest_path: str):
    table = Table(title="Generated Maps")
    table.add_column("Map", style="green")
    table.add_column("Width", justify="right")
    table.add_column("Height", justify="right")
    table.add_column("Size", justify="right")
    table.add_column("Empty", justify="right")
    table.add_column("Dynamic")
    for env in environments:
        table.add_row(
            env.name, str(env.width), str(env.height), str(env.size),
            str(env.empty_count), "yes" if env.dynamic else "no"
        )
    console.print(table)
    console.print(f"\nManifest: {manifest_path}")


def show_render(paths: Dict[str, str]):
    for kind, path in paths.items():
        console.print(f"{kind}: {path}")
