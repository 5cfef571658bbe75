import json
import os

import numpy as np
import pytest

from env_generator import generate_suite
from exceptions import EnvironmentLoadError
from map_io import (
    decode_cells, encode_cells, load_environment, read_manifest, resolve_env_paths,
    save_environment, write_suite,
)


def test_environment_file_keeps_walls_and_colors(tmp_path, make_environment):
    env = make_environment(np.random.default_rng(4))
    env.colors[env.occupied.nonzero()[0][0], env.occupied.nonzero()[1][0]] = 0
    path = tmp_path / "random.json"
    save_environment(env, str(path))
    loaded = load_environment(str(path))
    np.testing.assert_array_equal(loaded.occupied, env.occupied)
    np.testing.assert_array_equal(loaded.colors, env.colors)
    assert loaded.name == "random"


def test_cells_are_row_major_and_zero_for_empty(make_environment):
    env = make_environment(np.random.default_rng(0))
    cells = np.array(encode_cells(env)).reshape(env.height, env.width)
    assert (cells[~env.occupied] == 0).all()
    assert (cells[env.occupied] > 0).all()
    occupied, _ = decode_cells(cells.ravel().tolist(), env.width, env.height)
    np.testing.assert_array_equal(occupied, env.occupied)


def test_name_falls_back_to_file_name(tmp_path, make_environment):
    env = make_environment(np.random.default_rng(1))
    env.name = ""
    save_environment(env, str(tmp_path / "maps" / "hall.json"))
    assert load_environment(str(tmp_path / "maps" / "hall.json")).name == "hall"


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(EnvironmentLoadError):
        load_environment(str(tmp_path / "nope.json"))
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps({"width": 3}))
    with pytest.raises(EnvironmentLoadError):
        load_environment(str(broken))
    garbage = tmp_path / "garbage.json"
    garbage.write_text("{not json")
    with pytest.raises(EnvironmentLoadError):
        load_environment(str(garbage))


def test_suite_manifest(tmp_path):
    environments = generate_suite(3, seed=5, keep_largest=2)
    manifest = write_suite(environments, str(tmp_path))
    paths = read_manifest(manifest)
    assert [os.path.basename(p) for p in paths] == [f"{e.name}.json" for e in environments]
    with open(manifest) as f:
        entries = json.load(f)["maps"]
    assert [e["empty_cells"] for e in entries] == [e.empty_count for e in environments]
    for path, env in zip(paths, environments):
        np.testing.assert_array_equal(load_environment(path).occupied, env.occupied)


def test_resolve_env_paths(tmp_path, make_environment):
    rng = np.random.default_rng(2)
    loose = tmp_path / "loose"
    for name in ("b", "a"):
        env = make_environment(rng)
        env.name = name
        save_environment(env, str(loose / f"{name}.json"))
    (loose / "notes.txt").write_text("ignored")

    suite_dir = tmp_path / "suite"
    manifest = write_suite(generate_suite(2, seed=1, keep_largest=1), str(suite_dir))
    single = str(loose / "a.json")

    resolved = resolve_env_paths([str(loose), str(suite_dir), single])
    assert resolved[:2] == [str(loose / "a.json"), str(loose / "b.json")]
    assert resolved[2:-1] == read_manifest(manifest)
    assert resolved[-1] == single
    assert resolve_env_paths([manifest]) == read_manifest(manifest)
