from __future__ import annotations

import json
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd
import pytest

from critlab.config import load_config
from critlab.experiments import run_experiment
from critlab.pipeline import RunResult, finalize_run, run_units, start_run, write_csv
from critlab.utils import chunk_ranges, md5_checksum, stable_hash


def test_md5_checksum(tmp_path: Path) -> None:
    path = tmp_path / "abc.txt"
    path.write_bytes(b"abc")
    assert md5_checksum(path) == "900150983cd24fb0d6963f7d28e17f72"
    assert md5_checksum(tmp_path / "missing.txt") is None


def test_stable_hash_and_chunks() -> None:
    assert stable_hash("seed") == stable_hash("seed")
    assert stable_hash("seed") != stable_hash("seeds")
    assert chunk_ranges(10, 4) == [(0, 4), (4, 8), (8, 10)]
    assert chunk_ranges(0, 4) == []


def test_write_csv_orders_columns(tmp_path: Path) -> None:
    frame = pd.DataFrame({"b": [0.1], "a": [1]})
    path = write_csv(frame, tmp_path, "table", ["a", "b", "c"])
    assert path == tmp_path / "csv" / "table.csv"
    assert path.read_text(encoding="utf-8") == "a,b,c\n1,0.10000000000000001,\n"


def test_run_units_preserves_order() -> None:
    assert run_units(abs, [-3, 1, -2], workers=1) == [3, 1, 2]
    assert run_units(abs, [-3, 1, -2, -7], workers=2) == [3, 1, 2, 7]


def test_run_result_passed() -> None:
    assert RunResult("lln", {}, {"a": True, "b": True}).passed
    assert not RunResult("lln", {}, {"a": True, "b": False}).passed


MAXLOG = (
    "experiment: maxlog\n"
    "distribution: {kind: uniform-disk, radius: 1.0}\n"
    "k: 2\nn_list: [64]\nseeds: [0]\nradius: 2.0\nm_grid: 64\n"
)
LLN = (
    "experiment: lln\n"
    "distribution: {kind: uniform-disk, radius: 1.0}\n"
    "n_list: [16, 128]\nseeds: [0, 1]\npsi_per_instance: 2\nreference_size: 512\n"
)


def test_maxlog_run_writes_manifest(write_config: Callable[..., Path], tmp_path: Path) -> None:
    config = load_config(write_config(MAXLOG), out_dir=tmp_path / "out", workers=1, env={})
    result = run_experiment(config)
    assert result.passed
    assert set(result.verdicts) == {"ratio_bounded", "below_upper_bound"}
    assert result.summary["below_bound_fraction"] == 1.0
    manifest = json.loads((tmp_path / "out" / "run.json").read_text(encoding="utf-8"))
    assert manifest["experiment"] == "maxlog"
    assert manifest["passed"] is True
    entry = manifest["outputs"]["maxlog"]
    assert entry["path"] == "csv/maxlog.csv"
    assert entry["rows"] == 1
    assert entry["md5"] == md5_checksum(result.outputs["maxlog"])
    assert (tmp_path / "out" / "logs" / "run.log").exists()
    frame = pd.read_csv(result.outputs["maxlog"])
    assert list(frame.columns) == ["seed", "n", "k", "radius", "max_log_sn", "ratio_to_log_n"]


def test_rerun_is_byte_identical_across_workers(write_config: Callable[..., Path], tmp_path: Path) -> None:
    path = write_config(LLN)
    first = run_experiment(load_config(path, out_dir=tmp_path / "one", workers=1, env={}))
    second = run_experiment(load_config(path, out_dir=tmp_path / "two", workers=2, env={}))
    assert first.outputs["lln"].read_bytes() == second.outputs["lln"].read_bytes()
    assert len(pd.read_csv(first.outputs["lln"])) == 2 * 2 * 2


def test_inconclusive_verdict_fails_the_run(write_config: Callable[..., Path], tmp_path: Path) -> None:
    assert not RunResult("lln", {}, {"a": True}, inconclusive=["a"]).passed
    config = load_config(write_config(MAXLOG), out_dir=tmp_path / "out", workers=1, env={})
    result = finalize_run(config, {}, {}, {"a": True, "b": True}, start_run(config), ["a"])
    manifest = json.loads(result.manifest.read_text(encoding="utf-8"))
    assert manifest["verdicts"] == {"a": False, "b": True}
    assert manifest["inconclusive"] == ["a"]
    assert manifest["passed"] is False


CONVERGENCE = (
    "experiment: convergence\n"
    "distribution: {kind: uniform-disk}\n"
    "k: 1\nn_list: [16, 64]\nseeds: [0, 1]\nreference_size: 1024\nn_directions: 32\n"
)
JENSEN = (
    "experiment: jensen-audit\n"
    "distribution: {kind: uniform-disk}\n"
    "k: 1\nn_list: [24, 48]\nseeds: [0, 1]\npsi_per_instance: 3\nm_grid: 64\n"
)
# A point mass at 5 keeps |S_16| between 2 and 7 on the near circle, so the threshold must grow
POINT_MASS_SMALLBALL = (
    "experiment: smallball\n"
    "distribution: {kind: discrete, atoms: [5]}\n"
    "k: 1\nn_list: [16, 64]\nseeds: [0]\ntrials: 10000\npoints_L: 8\nlinear_n_list: [64, 256]\n"
)
# |S_4| >= 1.75 at the decoupling point, so no trial hits at event radius 1
TWO_ATOM_DECOUPLE = (
    "experiment: decouple-check\n"
    "distribution: {kind: discrete, atoms: [1, -1]}\n"
    "k: 1\nn_list: [4, 8]\nseeds: [0]\ninstances: 5\ntrials: 10000\n"
)


def test_convergence_run_records_reference_floor(write_config: Callable[..., Path], tmp_path: Path) -> None:
    result = run_experiment(load_config(write_config(CONVERGENCE), out_dir=tmp_path / "out", workers=1, env={}))
    frame = pd.read_csv(result.outputs["convergence"])
    assert list(frame.columns) == ["seed", "n", "k", "metric", "distance", "reference_floor", "certified", "wall_ms"]
    assert (frame["reference_floor"] > 0).all()
    assert frame.groupby("seed")["reference_floor"].nunique().eq(1).all()
    assert result.summary["reference_floor"] > 0
    assert (frame["wall_ms"] == 0).all()
    assert result.summary["total_wall_ms"] > 0


def test_jensen_audit_run(write_config: Callable[..., Path], tmp_path: Path) -> None:
    result = run_experiment(load_config(write_config(JENSEN), out_dir=tmp_path / "out", workers=1, env={}))
    assert result.passed
    frame = pd.read_csv(result.outputs["jensen_audit"])
    assert len(frame) == 2 * 2 * 3
    accepted = frame[~frame["rejected"]]
    np.testing.assert_allclose(accepted["normalized_gap"], accepted["lhs"] / accepted["n"])
    assert (accepted["slack"] >= -2e-3).all()
    assert result.summary["combined_instances"] > 0
    assert "combined_bound" in result.verdicts


def test_smallball_run_raises_threshold_until_hits(write_config: Callable[..., Path], tmp_path: Path) -> None:
    config = load_config(write_config(POINT_MASS_SMALLBALL), out_dir=tmp_path / "out", workers=1, env={})
    result = run_experiment(config)
    assert result.inconclusive == []
    assert result.summary["threshold_near"] == 8.0
    assert result.summary["threshold_far"] == 2.0
    assert result.summary["threshold_tuned_near"] is True
    near = pd.read_csv(result.outputs["smallball_near"])
    assert list(near["threshold"]) == [8.0, 8.0]
    assert list(near["hits"]) == [10_000, 0]
    assert result.verdicts["joint_decay_near"]
    manifest = json.loads(result.manifest.read_text(encoding="utf-8"))
    assert manifest["summary"]["threshold_far"] == 2.0


def test_decouple_check_run_raises_event_radius(write_config: Callable[..., Path], tmp_path: Path) -> None:
    result = run_experiment(load_config(write_config(TWO_ATOM_DECOUPLE), out_dir=tmp_path / "out", workers=1, env={}))
    assert result.inconclusive == []
    assert result.summary["event_radius"] == 2.0
    assert result.summary["enumerated_rows"] == 2
    assert result.verdicts["identity_holds"]
    assert "ctv_matches_enumeration" in result.verdicts
    ctv = pd.read_csv(result.outputs["ctv"])
    assert list(ctv["event_radius"]) == [2.0, 2.0]
    assert ctv["lhs_exact"][0] == pytest.approx(10 / 16)
    assert ctv["lhs_hits"][0] > 0
    np.testing.assert_allclose(ctv["rhs_root"], ctv["rhs_p_hat"] ** 0.5)


@pytest.mark.parametrize(
    ("text", "tables"),
    [
        (TWO_ATOM_DECOUPLE, ["decouple_check", "ctv"]),
        (POINT_MASS_SMALLBALL, ["smallball_near", "smallball_far", "smallball_linear"]),
        (JENSEN, ["jensen_audit"]),
    ],
)
def test_outputs_identical_across_workers(
    write_config: Callable[..., Path], tmp_path: Path, text: str, tables: list[str]
) -> None:
    path = write_config(text)
    first = run_experiment(load_config(path, out_dir=tmp_path / "one", workers=1, env={}))
    second = run_experiment(load_config(path, out_dir=tmp_path / "two", workers=2, env={}))
    for name in tables:
        assert first.outputs[name].read_bytes() == second.outputs[name].read_bytes()
