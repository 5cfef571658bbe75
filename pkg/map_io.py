"""
Map I/O
-------
JSON encoding of ground-truth environments, generation manifests and
LocalMap debug dumps.

Environment cells are a row-major list where 0 is EMPTY and an OCCUPIED
cell is 1 + (r << 16 | g << 8 | b).
"""

import json
import logging
import os
from typing import Any, Dict, List

import numpy as np

from exceptions import EnvironmentLoadError, FragmentStoreError
from local_map import LocalMap, RunningStats
from models import FracturePoint, GenParams, GridEnvironment, Heading

logger = logging.getLogger(__name__)


def encode_cells(env: GridEnvironment) -> List[int]:
    rgb = env.colors.astype(np.int64)
    packed = 1 + ((rgb[..., 0] << 16) | (rgb[..., 1] << 8) | rgb[..., 2])
    return np.where(env.occupied, packed, 0).ravel().tolist()


def decode_cells(cells: List[int], width: int, height: int):
    """Inverse of encode_cells: (occupied, colors)."""
    values = np.asarray(cells, dtype=np.int64)
    if values.size != width * height:
        raise EnvironmentLoadError(
            f"Cell list has {values.size} entries, expected {width}x{height}"
        )
    values = values.reshape(height, width)
    occupied = values > 0
    packed = np.where(occupied, values - 1, 0)
    colors = np.stack(
        [(packed >> 16) & 0xFF, (packed >> 8) & 0xFF, packed & 0xFF], axis=-1
    ).astype(np.uint8)
    return occupied, colors


def environment_to_dict(env: GridEnvironment) -> Dict[str, Any]:
    return {
        "name": env.name,
        "width": env.width,
        "height": env.height,
        "seed": int(env.seed),
        "gen_params": env.gen_params.to_dict() if env.gen_params else {},
        "dynamic": bool(env.dynamic),
        "cells": encode_cells(env),
    }


def environment_from_dict(data: Dict[str, Any]) -> GridEnvironment:
    try:
        width, height = int(data["width"]), int(data["height"])
        occupied, colors = decode_cells(data["cells"], width, height)
        params = data.get("gen_params") or None
        return GridEnvironment(
            occupied=occupied,
            colors=colors,
            dynamic=bool(data.get("dynamic", False)),
            gen_params=GenParams(**params) if params else None,
            seed=int(data.get("seed", 0)),
            name=str(data.get("name", "")),
        )
    except EnvironmentLoadError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise EnvironmentLoadError(f"Malformed environment record: {e}")


def save_environment(env: GridEnvironment, path: str):
    try:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w") as f:
            json.dump(environment_to_dict(env), f)
    except OSError as e:
        logger.error(f"Failed to write environment {path}: {e}")
        raise EnvironmentLoadError(f"Failed to write environment {path}: {e}")


def load_environment(path: str) -> GridEnvironment:
    """
    Read a map file.

    Raises:
        EnvironmentLoadError: If the file is missing or malformed
    """
    try:
        with open(path) as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Failed to load environment {path}: {e}")
        raise EnvironmentLoadError(f"Failed to load environment {path}: {e}")

    env = environment_from_dict(data)
    if not env.name:
        env.name = os.path.splitext(os.path.basename(path))[0]
    return env


def write_suite(environments: List[GridEnvironment], out_dir: str) -> str:
    """Write one JSON file per map plus manifest.json; returns the manifest path."""
    entries = []
    for env in environments:
        filename = f"{env.name}.json"
        save_environment(env, os.path.join(out_dir, filename))
        entries.append({
            "file": filename,
            "name": env.name,
            "width": env.width,
            "height": env.height,
            "size": env.size,
            "empty_cells": env.empty_count,
            "dynamic": bool(env.dynamic),
        })

    manifest_path = os.path.join(out_dir, "manifest.json")
    try:
        with open(manifest_path, "w") as f:
            json.dump({"maps": entries}, f, indent=2)
    except OSError as e:
        raise EnvironmentLoadError(f"Failed to write manifest {manifest_path}: {e}")
    logger.info(f"Wrote {len(entries)} maps to {out_dir}")
    return manifest_path


def read_manifest(path: str) -> List[str]:
    """Map file paths listed in a manifest, resolved against its directory."""
    try:
        with open(path) as f:
            data = json.load(f)
        base = os.path.dirname(path)
        return [os.path.join(base, entry["file"]) for entry in data["maps"]]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise EnvironmentLoadError(f"Failed to read manifest {path}: {e}")


def resolve_env_paths(paths: List[str]) -> List[str]:
    """Expand manifests and directories into individual map files."""
    resolved = []
    for path in paths:
        if os.path.isdir(path):
            manifest = os.path.join(path, "manifest.json")
            if os.path.exists(manifest):
                resolved.extend(read_manifest(manifest))
            else:
                resolved.extend(
                    os.path.join(path, name) for name in sorted(os.listdir(path))
                    if name.endswith(".json")
                )
        elif os.path.basename(path) == "manifest.json":
            resolved.extend(read_manifest(path))
        else:
            resolved.append(path)
    return resolved


def _fracture_point_to_dict(fp: FracturePoint) -> Dict[str, Any]:
    return {
        "id": fp.id,
        "pos": list(fp.pos),
        "border": [list(cell) for cell in fp.border],
        "neighbor_fragment": fp.neighbor_fragment,
        "distances_to_other_fps": {str(k): v for k, v in fp.distances_to_other_fps.items()},
    }


def _fracture_point_from_dict(data: Dict[str, Any]) -> FracturePoint:
    return FracturePoint(
        id=int(data["id"]),
        pos=(int(data["pos"][0]), int(data["pos"][1])),
        border=[(int(r), int(c)) for r, c in data["border"]],
        neighbor_fragment=int(data["neighbor_fragment"]),
        distances_to_other_fps={int(k): int(v) for k, v in data["distances_to_other_fps"].items()},
    )


def local_map_to_dict(local_map: LocalMap) -> Dict[str, Any]:
    """
    Debug dump: bounds, channels as flat arrays, pose and fracture points.

    Confidence values are written as float.hex strings so a dump reloads
    bit-exactly.
    """
    return {
        "fragment_id": local_map.fragment_id,
        "H": local_map.H,
        "W": local_map.W,
        "origin": list(local_map.origin),
        "agent_pos": list(local_map.agent_pos),
        "heading": local_map.heading.name,
        "created_at": local_map.created_at,
        "confidence": [float(v).hex() for v in local_map.confidence.ravel()],
        "color": local_map.color.ravel().tolist(),
        "occupancy": local_map.occupancy.ravel().tolist(),
        "stats": {
            "n": local_map.stats.n,
            "mean": float(local_map.stats.mean).hex(),
            "m2": float(local_map.stats.m2).hex(),
        },
        "fracture_points": [_fracture_point_to_dict(fp) for fp in local_map.fracture_points],
    }


def local_map_from_dict(data: Dict[str, Any]) -> LocalMap:
    try:
        H, W = int(data["H"]), int(data["W"])
        stats = data["stats"]
        return LocalMap(
            confidence=np.array(
                [float.fromhex(v) for v in data["confidence"]], dtype=np.float64
            ).reshape(H, W),
            color=np.asarray(data["color"], dtype=np.uint8).reshape(H, W, 3),
            occupancy=np.asarray(data["occupancy"], dtype=np.int8).reshape(H, W),
            agent_pos=(int(data["agent_pos"][0]), int(data["agent_pos"][1])),
            heading=Heading[data["heading"]],
            origin=(int(data["origin"][0]), int(data["origin"][1])),
            fracture_points=[_fracture_point_from_dict(fp) for fp in data["fracture_points"]],
            stats=RunningStats(
                n=int(stats["n"]),
                mean=float.fromhex(stats["mean"]),
                m2=float.fromhex(stats["m2"]),
            ),
            created_at=int(data["created_at"]),
            fragment_id=int(data["fragment_id"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise FragmentStoreError(f"Malformed local map dump: {e}")


def dump_local_map(local_map: LocalMap, path: str):
    try:
        with open(path, "w") as f:
            json.dump(local_map_to_dict(local_map), f)
    except OSError as e:
        logger.error(f"Failed to dump local map to {path}: {e}")
        raise FragmentStoreError(f"Failed to dump local map to {path}: {e}")


def load_local_map(path: str) -> LocalMap:
    try:
        with open(path) as f:
            return local_map_from_dict(json.load(f))
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Failed to load local map {path}: {e}")
        raise FragmentStoreError(f"Failed to load local map {path}: {e}")
