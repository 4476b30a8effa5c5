import json
import os
import pathlib

import numpy as np
import pytest

import cuatree

FIXTURES = pathlib.Path(os.environ.get("CUATREE_FIXTURES", pathlib.Path(__file__).parents[2] / "fixtures"))


@pytest.fixture
def manifest(tmp_path):
    doc = json.loads((FIXTURES / "launcher_manifest.json").read_text())
    doc["sim_spec"] = str(FIXTURES / "launcher.json")
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(doc))
    return path


def test_rms_diff():
    zeros = np.zeros((2, 2), dtype=np.uint8)
    one = zeros.copy()
    one[0, 0] = 10
    assert cuatree.rms_diff(zeros, zeros) == 0.0
    assert cuatree.rms_diff(zeros, one) == pytest.approx(5.0, abs=1e-9)
    assert cuatree.rms_diff(np.zeros((4, 4, 3), np.uint8), np.full((4, 4, 3), 255, np.uint8)) == pytest.approx(255.0)
    with pytest.raises(ValueError):
        cuatree.rms_diff(np.zeros((2, 2), np.uint8), np.zeros((3, 2), np.uint8))


def test_text_metrics():
    assert cuatree.unique_task_count(["Open mail"] * 5) == ([1, 1, 1, 1, 1], [])
    assert cuatree.unique_task_count(["Open mail", "--", "Play music"]) == ([1, 1, 2], [1])
    assert cuatree.ttr(["open file", "open file"]) == 0.5
    assert cuatree.tfidf_cosine("open mail", "play music") == 0.0
    with pytest.raises(cuatree.ContractError):
        cuatree.unique_task_count(["a"], 0.0)


def test_explore_and_analyze(manifest, tmp_path):
    out = tmp_path / "forest"
    summary = cuatree.explore(str(manifest), str(out))
    assert summary["trees"] == 5
    assert summary["corruptions"] == 0

    trees, warnings = cuatree.load_forest(out)
    assert len(trees) == 5 and warnings == []
    assert all("nodes" in t for t in trees)

    stats = cuatree.exploration_stats(str(out))
    assert stats["trajectories"] > 0
    assert stats["avg_expansions_per_trajectory"] <= stats["mean_trajectory_length"]

    values, mean = cuatree.redundancy_matrix(str(out))
    assert len(values) == 5
    assert all(values[i][i] == 1.0 for i in range(5))
    assert 0.0 <= mean <= 1.0


def test_cli_exit_codes(manifest, tmp_path):
    forest = tmp_path / "forest"
    assert cuatree.cli(["explore", str(manifest), "--out", str(forest)]) == 0
    assert cuatree.cli(["validate", str(forest)]) == 0
    assert cuatree.cli(["postprocess", str(forest), "--out", str(tmp_path / "ds"), "--min-dim", "-1"]) == 2


def test_bad_manifest(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 1}))
    with pytest.raises(cuatree.ConfigError, match="seed"):
        cuatree.explore(str(bad), str(tmp_path / "out"))
