"""
Fragment snapshot storage.
Keeps stored local maps in memory, or spills them to one JSON file per
fragment with a manifest of the connectivity graph.
"""

import json
import logging
import os
from typing import Any, Dict, Optional

from exceptions import FragmentStoreError
from local_map import LocalMap
from map_io import dump_local_map, load_local_map

logger = logging.getLogger(__name__)


class FragmentCache:
    """Snapshot table for long-term memory fragments."""

    def __init__(self, spill_dir: Optional[str] = None):
        """
        Initialize the fragment cache.

        Args:
            spill_dir: Directory for spilled fragments; None keeps everything in memory
        """
        self.spill_dir = spill_dir
        self.memory_cache: Dict[int, LocalMap] = {}
        self._setup_spill_dir()

    def _setup_spill_dir(self):
        """Create the spill directory if it doesn't exist."""
        if not self.spill_dir:
            return
        try:
            os.makedirs(self.spill_dir, exist_ok=True)
        except OSError as e:
            raise FragmentStoreError(f"Failed to setup spill directory: {e}")

    def _fragment_file(self, fragment_id: int) -> str:
        return os.path.join(self.spill_dir, f"fragment-{fragment_id:05d}.json")

    def __contains__(self, fragment_id: int) -> bool:
        if fragment_id in self.memory_cache:
            return True
        return bool(self.spill_dir) and os.path.exists(self._fragment_file(fragment_id))

    def put(self, fragment_id: int, local_map: LocalMap):
        """Store a snapshot; later changes to local_map do not leak into it."""
        snapshot = local_map.copy()
        if not self.spill_dir:
            self.memory_cache[fragment_id] = snapshot
            return
        dump_local_map(snapshot, self._fragment_file(fragment_id))
        self.memory_cache.pop(fragment_id, None)

    def get(self, fragment_id: int) -> LocalMap:
        """
        Fetch a private copy of a stored snapshot.

        Raises:
            FragmentStoreError: If the fragment was never stored
        """
        if fragment_id in self.memory_cache:
            return self.memory_cache[fragment_id].copy()

        if self.spill_dir:
            path = self._fragment_file(fragment_id)
            if os.path.exists(path):
                logger.debug(f"Reading spilled fragment {fragment_id}")
                return load_local_map(path)

        raise FragmentStoreError(f"Fragment {fragment_id} is not in long-term memory")

    def write_manifest(self, adjacency: Dict[str, Any]):
        """Record the graph next to the spilled fragments."""
        if not self.spill_dir:
            return
        path = os.path.join(self.spill_dir, "manifest.json")
        try:
            with open(path, "w") as f:
                json.dump(adjacency, f, indent=2)
        except OSError as e:
            logger.error(f"Failed to write fragment manifest: {e}")
            raise FragmentStoreError(f"Failed to write fragment manifest: {e}")

    def clear(self):
        """Drop every snapshot."""
        self.memory_cache.clear()
        if not self.spill_dir:
            return
        try:
            for name in os.listdir(self.spill_dir):
                if name.startswith("fragment-") or name == "manifest.json":
                    os.remove(os.path.join(self.spill_dir, name))
        except OSError as e:
            raise FragmentStoreError(f"Failed to clear spill directory: {e}")
