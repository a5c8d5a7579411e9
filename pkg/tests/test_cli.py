import json
import subprocess
import sys

import pytest

from skorokhod_mc.cli import main


@pytest.fixture
def spec_file(tmp_path):
    p = tmp_path / "spec.json"
    p.write_text(json.dumps({"preset": "stopped_walk", "n_max": 3}))
    return p


def _config(tmp_path, **extra):
    doc = {"spec": {"preset": "stopped_walk", "n_max": 3}, "num_paths": 400, "dt": 1e-3,
           "output_dir": str(tmp_path / "out")}
    doc.update(extra)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    return p


def test_validate_ok(spec_file, capsys):
    assert main(["validate", str(spec_file)]) == 0
    assert "ok: martingale" in capsys.readouterr().out


def test_validate_reports_violations(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"kind": "martingale", "root_value": 1, "n_max": 1, "kernels": [
        {"stage": 0, "state": 1, "atoms": [[0.5, 0.5], [1.25, 0.5]]}]}))
    assert main(["validate", str(p)]) == 1
    assert "0.875" in capsys.readouterr().out


def test_plan_prints_trees_and_laws(spec_file, capsys):
    assert main(["plan", str(spec_file), "--stage", "0", "--laws"]) == 0
    out = capsys.readouterr().out
    assert "exit (-1, 1) from 0, p_upper=0.5" in out
    assert "M_3:" in out


def test_plan_super(tmp_path, capsys):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"preset": "multiplicative", "n_max": 1}))
    assert main(["plan", str(p)]) == 0
    assert "drop to 0.875" in capsys.readouterr().out


def test_run_and_report(tmp_path, capsys):
    cfg = _config(tmp_path, spec={"preset": "constant", "n_max": 3})
    assert main(["run", str(cfg), "--seed", "3", "--paths", "300"]) == 0
    out = tmp_path / "out"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["seed"] == 3 and summary["config"]["num_paths"] == 300
    before = (out / "summary.json").read_text()
    assert main(["report", str(out)]) == 0
    assert capsys.readouterr().out.endswith(before)
    assert main(["report", str(out), "--write"]) == 0
    assert (out / "summary.json").read_text() == before


def test_run_failing_check_exit_code(tmp_path):
    # far too few paths for the TV tolerance
    cfg = _config(tmp_path, spec={"preset": "stopped_walk", "n_max": 6}, num_paths=30)
    assert main(["run", str(cfg)]) == 1


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = _config(tmp_path, num_path=3)
    assert main(["run", str(cfg)]) == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_missing_file_exit_code(tmp_path):
    assert main(["validate", str(tmp_path / "none.json")]) == 2


def test_console_script(spec_file):
    proc = subprocess.run([sys.executable, "-m", "skorokhod_mc.cli", "validate", str(spec_file)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "ok" in proc.stdout
