import json
from pathlib import Path

import pandas as pd

import cli

CONFIG = """
seed = 11
ladder = [16, 32, 64]

[[graph]]
name = "tilted"
half_width = 0.3
coefficients = { "1,0" = 0.5, "0,2" = 0.25 }

[[experiment]]
kind = "algebra-suite"
id = "algebra"
cases = 15
n_max = 4

[[experiment]]
kind = "flux"
id = "flux-cylinder"
surface = "cylinder-patch"
k = 1

[[experiment]]
kind = "flux"
id = "flux-cap"
surface = "sphere-cap"
k = 1

[[experiment]]
kind = "volume"
id = "volume-cylinder"
surface = "cylinder-patch"
surface_params = { radius = 2.0 }

[[experiment]]
kind = "shrinker-pin"
id = "shrinker"

[[experiment]]
kind = "torus"
id = "torus"
n_values = [2, 3]
audit_n_max = 4
"""


def _snapshot(directory: Path):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_run_is_reproducible(tmp_path, capsys):
    config = tmp_path / "run.toml"
    config.write_text(CONFIG)

    assert cli.main(["run", str(config), "--out-dir", str(tmp_path / "first")]) == 0
    assert cli.main(["run", str(config), "--out-dir", str(tmp_path / "second")]) == 0
    out = capsys.readouterr().out
    assert "Run finished successfully!" in out
    assert "flux-cap: PASS" in out
    assert "   Time: " in out

    first = _snapshot(tmp_path / "first")
    assert first == _snapshot(tmp_path / "second")
    for name in ("algebra.json", "flux-cylinder.json", "flux-cap.json", "volume-cylinder.json",
                 "shrinker.json", "torus.json", "summary.csv", "summary.json",
                 "flux-cap__residual_paper.csv", "volume-cylinder__recovered.csv"):
        assert name in first

    summary = pd.read_csv(tmp_path / "first" / "summary.csv")
    assert summary["id"].tolist() == ["algebra", "flux-cylinder", "flux-cap", "volume-cylinder",
                                      "shrinker", "torus"]
    assert set(summary["status"]) == {"pass"}

    report = json.loads(first["flux-cap.json"])
    assert report["identity"] == "weighted-flux-formula"
    assert report["data"]["integrals"]["residual_paper"]["levels"] == [16, 32, 64]


def test_failed_check_sets_exit_code(tmp_path, capsys):
    config = tmp_path / "strict.toml"
    config.write_text('ladder = [16, 32, 64]\n\n[[experiment]]\nkind = "volume"\nid = "cap"\n'
                      'surface = "sphere-cap"\n')
    assert cli.main(["run", str(config), "--out-dir", str(tmp_path / "out")]) == 1
    out = capsys.readouterr().out
    assert "cap: FAIL" in out
    assert "Failed: recovered_equals_volume" in out
    assert json.loads((tmp_path / "out" / "summary.json").read_text())["passed"] is False


def test_errored_experiment_is_reported(tmp_path, capsys):
    config = tmp_path / "error.toml"
    config.write_text('ladder = [16, 32, 64]\n\n[[experiment]]\nkind = "volume"\nid = "graph"\n'
                      'surface = "graph-patch"\n\n[[experiment]]\nkind = "shrinker-pin"\nid = "pin"\n')
    assert cli.main(["run", str(config), "--out-dir", str(tmp_path / "out")]) == 1
    out = capsys.readouterr().out
    assert "graph: ERROR" in out
    assert "Error: PreconditionError" in out
    assert "pin: PASS" in out
    report = json.loads((tmp_path / "out" / "graph.json").read_text())
    assert report["status"] == "error"
