from __future__ import annotations

import json
from pathlib import Path

import pytest

from killing_probe.app import main
from killing_probe.config import CATALOG_NAMES

from tests.helpers import CONFIG_DIR, load_sample_config, write_config


def test_rank_formula_command(capsys) -> None:
    assert main(["rank-formula", "--n", "2", "--d", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out == {"n": 2, "d": 1, "rank": 3, "jet_order": 5}


def test_rank_formula_rejects_small_dimension(capsys) -> None:
    assert main(["rank-formula", "--n", "1", "--d", "1"]) == 2
    assert "UsageError" in capsys.readouterr().err


def test_catalog_listing(capsys) -> None:
    assert main(["catalog", "--list"]) == 0
    out = capsys.readouterr().out
    for name in CATALOG_NAMES:
        assert name in out


def test_catalog_without_list_is_a_usage_error() -> None:
    assert main(["catalog"]) == 2


def test_argument_errors_exit_with_two() -> None:
    with pytest.raises(SystemExit) as excinfo:
        main(["rank-formula", "--n", "two", "--d", "1"])
    assert excinfo.value.code == 2
    with pytest.raises(SystemExit):
        main([])


def test_unknown_metric_config(tmp_path: Path, capsys) -> None:
    path = write_config(tmp_path / "bad.json", {"metric": {"name": "torus"}, "degrees": [1], "seeds": [1]})
    assert main(["analyze", str(path), "--out", str(tmp_path / "out")]) == 2
    err = capsys.readouterr().err
    assert "UnknownMetric" in err
    assert not (tmp_path / "out").exists()


def test_missing_config_file(tmp_path: Path) -> None:
    assert main(["analyze", str(tmp_path / "nowhere.json")]) == 2


def test_analyze_writes_report_and_summary(tmp_path: Path, capsys) -> None:
    out_dir = tmp_path / "flat"
    code = main(["analyze", str(CONFIG_DIR / "flat_d1.json"), "--out", str(out_dir), "--threads", "1"])
    assert code == 0
    report = json.loads((out_dir / "report.json").read_text(encoding="utf-8"))
    assert report["verdicts"] == {"1": "DIM=3"}
    assert report["command"] == "analyze"
    # floats are written as round-trippable strings
    assert isinstance(report["cells"][0]["obstruction"]["matrix_norm"], str)
    summary = (out_dir / "summary.txt").read_text(encoding="utf-8")
    assert "d=1: DIM=3" in summary
    assert "d=1: DIM=3" in capsys.readouterr().out


def test_sweep_writes_csv(tmp_path: Path) -> None:
    raw = load_sample_config("sweep.json")
    raw["sweep"]["amplitudes"] = [0.0, 0.001]
    raw["degrees"] = [1]
    raw["oracles"] = {"collocation": False, "holonomy": False}
    path = write_config(tmp_path / "sweep.json", raw)
    out_dir = tmp_path / "sweep"
    assert main(["sweep", str(path), "--out", str(out_dir), "--threads", "1"]) == 0
    lines = (out_dir / "sweep.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "amplitude,d,seed,nontrivial_dim,gap_ratio"
    assert len(lines) == 3
    document = json.loads((out_dir / "report.json").read_text(encoding="utf-8"))
    assert document["command"] == "sweep"
    assert len(document["reports"]) == 2


def test_sweep_without_grid_is_a_usage_error(tmp_path: Path, capsys) -> None:
    assert main(["sweep", str(CONFIG_DIR / "flat_d1.json"), "--out", str(tmp_path)]) == 2
    assert "UsageError" in capsys.readouterr().err
