import hashlib
import subprocess
import sys

import numpy as np
import pytest

from scorecard_qp import dataio
from scorecard_qp.cli import run_cli

SMALL_CONFIG = """
schema_version = 1
[[characteristics]]
name = "c1"
attributes = ["a", "b", "c", "NO INFORMATION"]
[[characteristics]]
name = "c2"
attributes = ["a", "b", "c", "d", "NO INFORMATION"]
[engineering]
fixes = [1]
patterns = [{j = 2, k = 3, sense = ">="}, {j = 6, k = 7, sense = "<="}]
inweights = [{index = 8, value = 0.2}]
[problem]
name = ["classic", "penalized", "inweight", "range", "regression"]
lambda = 0.05
div_floor_fraction = 0.9
[range]
indices = [2, 3, 4]
targets = [0.6, 0.1, -0.6]
[data]
path = "data.csv"
split_keys = [0, 1]
[synth]
seed = 4
n_good = 1500
n_bad = 700
separation = 1.0
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL_CONFIG)
    return path


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        h.update(str(p).encode())
        if p.is_file():
            h.update(p.read_bytes())
            h.update(str(p.stat().st_mtime_ns).encode())
    return h.hexdigest()


def test_check_builtin_shapes(capsys):
    assert run_cli(["check", "--config", "builtin:fraud_case"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert "Ac 59x171" in out and "Ap 106x171" in out and "Ai 2x171" in out
    assert "IW 0.5, 0.3" in out


def test_check_does_not_write(tmp_path, small_cfg, capsys):
    assert run_cli(["synth", "--config", str(small_cfg), "--out", str(tmp_path / "data.csv")]) == 0
    before = tree_digest(tmp_path)
    assert run_cli(["check", "--config", str(small_cfg)]) == 0
    assert tree_digest(tmp_path) == before
    assert "dev goods" in capsys.readouterr().out


def test_small_pipeline(tmp_path, small_cfg, capsys):
    data = tmp_path / "data.csv"
    assert run_cli(["synth", "--config", str(small_cfg), "--out", str(data)]) == 0
    out = tmp_path / "out"
    assert run_cli(["solve", "--config", str(small_cfg), "--out", str(out), "--problem", "all"]) == 0
    labels, W, footers = dataio.read_report(out / "report.csv")
    assert labels == ["classic", "penalized", "inweight", "range", "regression"]
    assert W.shape == (9, 5)
    for name in labels:
        assert run_cli(["kkt", "--config", str(small_cfg), "--solution",
                        str(out / f"solution_{name}.txt")]) == 0
    text = capsys.readouterr().out
    assert "FAIL" not in text


def test_solve_overrides(tmp_path, small_cfg, capsys):
    data = tmp_path / "data.csv"
    run_cli(["synth", "--config", str(small_cfg), "--out", str(data), "--seed", "7"])
    out = tmp_path / "o"
    code = run_cli(["solve", "--config", str(small_cfg), "--data", str(data), "--out", str(out),
                    "--problem", "classic,range", "--delta", "3", "--div-floor", "0.28",
                    "--split-keys", "2"])
    assert code == 0
    stored = dataio.read_solution(out / "solution_range.txt")
    assert stored.meta["div_floor"] == 0.28
    assert dataio.read_solution(out / "solution_classic.txt").meta["delta"] == 3.0


def test_kkt_detects_tampering(tmp_path, small_cfg, capsys):
    run_cli(["synth", "--config", str(small_cfg), "--out", str(tmp_path / "data.csv")])
    out = tmp_path / "out"
    run_cli(["solve", "--config", str(small_cfg), "--out", str(out), "--problem", "inweight"])
    path = out / "solution_inweight.txt"
    lines = path.read_text().splitlines()
    idx = lines.index("[weights]") + 8
    lines[idx] = "8 0.25"
    path.write_text("\n".join(lines) + "\n")
    assert run_cli(["kkt", "--config", str(small_cfg), "--solution", str(path)]) == 1
    assert "FAIL in-weights" in capsys.readouterr().out


def test_missing_data_names_flag(tmp_path, capsys):
    code = run_cli(["solve", "--config", "builtin:fraud_case", "--out", str(tmp_path)])
    assert code != 0
    assert "--data" in capsys.readouterr().err
    code = run_cli(["solve", "--config", "builtin:fraud_case", "--data", str(tmp_path / "x.csv"),
                    "--out", str(tmp_path)])
    assert code != 0
    assert "--data" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [["bogus"], [], ["check"], ["check", "--config", "x", "--nope"],
     ["solve", "--config", "x", "--out", "y", "--problem", "lasso"]],
)
def test_usage_errors(argv, capsys):
    assert run_cli(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_bad_config_exit_one(tmp_path, capsys):
    path = tmp_path / "c.toml"
    path.write_text("schema_version = 99\n")
    assert run_cli(["check", "--config", str(path)]) == 1
    assert "schema_version" in capsys.readouterr().err


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "scorecard_qp.cli", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "solve" in res.stdout
