import json
import os
import subprocess
import sys

import numpy as np
import pytest

from dsnet.cli import main
from dsnet.data import AnnotatedScene, save_scene
from dsnet.formats import read_density


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def tree(root):
    return {
        os.path.relpath(os.path.join(d, f), root): open(os.path.join(d, f), "rb").read()
        for d, _, files in os.walk(root)
        for f in files
    }


def test_analyze_rf_gridding(capsys):
    code, out, _ = run(capsys, "analyze-rf", "--dilations", "3,6")
    assert code == 0
    assert "86.4" in out and "7 of 19" in out


def test_analyze_rf_json_and_heatmap(capsys, tmp_path):
    code, out, _ = run(
        capsys, "analyze-rf", "--dilations", "1,2,3", "--json", "--audit", "--heatmap", str(tmp_path / "h.pgm")
    )
    doc = json.loads(out)
    assert code == 0 and doc["distinct_sizes"] == [3, 5, 7, 9, 11, 13] and doc["max_gap"] == 2
    assert doc["lost_fraction"] == 0.0 and doc["audit"]["passed"]
    assert (tmp_path / "h.pgm").exists()


def test_analyze_rf_audit_failure_exit(capsys):
    code, out, _ = run(capsys, "analyze-rf", "--dilations", "3,6,12", "--audit")
    assert code == 1 and "FAIL" in out


def test_analyze_rf_config_file(capsys, tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"dilations": [3, 6], "connectivity": "sequential"}))
    code, out, _ = run(capsys, "analyze-rf", "--config", str(tmp_path / "c.json"))
    assert code == 0 and "paths: 1" in out and "86.4" in out


def test_unknown_config_keys(capsys, tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"dilations": "3,6", "colour": "red", "dpi": 3}))
    code, _, err = run(capsys, "analyze-rf", "--config", str(tmp_path / "c.json"))
    record = json.loads(err)
    assert code == 2 and record["error"] == "ConfigurationError"
    assert "colour" in record["message"] and "dpi" in record["message"]


def test_missing_required(capsys):
    code, _, err = run(capsys, "gen-gt")
    assert code == 2 and "--scene" in json.loads(err)["message"]


def test_gen_gt_three_heads(capsys, tmp_path):
    scene = AnnotatedScene(np.zeros((24, 32, 3), np.uint8), [[3, 4], [20.5, 11], [31.5, 23.5]])
    save_scene(tmp_path / "s.json", scene)
    code, out, _ = run(capsys, "gen-gt", "--scene", str(tmp_path / "s.json"), "--kernel", "fixed:2", "--out-dir", str(tmp_path / "o"))
    assert code == 0
    grid = read_density(tmp_path / "o" / "s.dmp")
    assert grid.shape == (24, 32) and abs(grid.sum() - 3.0) < 1e-6
    code, out, _ = run(capsys, "gen-gt", "--scene", str(tmp_path / "s.json"), "--downsample", "8", "--out", str(tmp_path / "d.dmp"))
    grid = read_density(tmp_path / "d.dmp")
    assert grid.shape == (3, 4) and abs(grid.sum() - 3.0) < 1e-6


def test_synth_data_byte_identical(capsys, tmp_path):
    for name in ("a", "b"):
        assert run(capsys, "synth-data", "--count", "64", "--seed", "7", "--out-dir", str(tmp_path / name))[0] == 0
    a, b = tree(tmp_path / "a"), tree(tmp_path / "b")
    assert len(a) == 128 and a == b


def test_train_then_eval(capsys, tmp_path, monkeypatch):
    cfg = {"data": {"count": 3, "width": 32, "height": 32, "crop": False}, "model": {"backbone_init": "he"}}
    (tmp_path / "run.json").write_text(json.dumps(cfg))
    monkeypatch.setenv("DSNET_OUTPUT_DIR", str(tmp_path / "run"))
    code, out, _ = run(capsys, "train", "--config", str(tmp_path / "run.json"), "--iterations", "3", "--lr", "1e-3")
    assert code == 0
    saved = json.loads((tmp_path / "run" / "config.json").read_text())
    assert saved["iterations"] == 3 and saved["optim"]["lr"] == 1e-3
    assert len((tmp_path / "run" / "loss.tsv").read_text().splitlines()) == 3
    monkeypatch.setenv("DSNET_OUTPUT_DIR", str(tmp_path / "ev"))
    code, out, _ = run(capsys, "eval", "--checkpoint", str(tmp_path / "run" / "checkpoint.dsn"), "--synthetic-count", "3")
    doc = json.loads(out)
    assert code == 0 and doc["n"] == 3 and doc["mae"] <= doc["mse"]
    assert json.loads((tmp_path / "ev" / "eval.json").read_text())["mae"] == doc["mae"]


def test_train_rejects_unknown_keys(capsys, tmp_path):
    (tmp_path / "run.json").write_text(json.dumps({"optim": {"learning_rate": 1}}))
    code, _, err = run(capsys, "train", "--config", str(tmp_path / "run.json"))
    assert code == 2 and "optim.learning_rate" in json.loads(err)["message"]


def test_eval_missing_checkpoint(capsys, tmp_path):
    code, _, err = run(capsys, "eval", "--checkpoint", str(tmp_path / "none.dsn"))
    assert code != 0 and json.loads(err)["error"] == "FileNotFoundError"


def test_console_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "dsnet.cli", "analyze-rf", "--dilations", "3,6"], capture_output=True, text=True
    )
    assert out.returncode == 0 and "86.4" in out.stdout
