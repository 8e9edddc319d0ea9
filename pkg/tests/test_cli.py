import csv
import hashlib
import json

import numpy as np
import pytest

from lschjb.cli import main
from lschjb.models import ex1_L

SMALL_GRID = {"grid": {"t": [0.0, 1.0, 51], "x": [-2.0, 2.0, 101]}}
CONFIGS = {
    "conjugate": {"count": 401},
    "solve-value": SMALL_GRID,
    "check-conditions": {},
    "verify-solution": {"probes": {"t": [0.0, 1.0, 3], "x": [-2.0, 2.0, 5]}},
    "reduce": {"per_axis": 33, "probes": 20},
    "trajectory": dict(SMALL_GRID, start=[0.2, 0.9]),
    "viability": {"eps": 0.1},
}


def run(tmp_path, command, cfg, *extra, name="out"):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / name
    return main([command, "--config", str(path), "--out", str(out), *extra]), out


def read_all(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.mark.parametrize("command", sorted(CONFIGS))
def test_command_runs_and_is_reproducible(tmp_path, command):
    code, out = run(tmp_path, command, CONFIGS[command], name="a")
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == command and man["exit_status"] == 0 and man["artifacts"]
    for name, digest in man["artifacts"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    code2, out2 = run(tmp_path, command, CONFIGS[command], name="b")
    assert code2 == 0 and read_all(out) == read_all(out2)


def test_usage_errors(tmp_path):
    assert main(["no-such-command"]) == 64
    assert run(tmp_path, "conjugate", {"model": "no-such-model"})[0] == 64
    assert run(tmp_path, "conjugate", {"command": "reduce"}, name="c")[0] == 64
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["conjugate", "--config", str(bad), "--out", str(tmp_path / "d")]) == 64


def test_failed_verdict_exit_code(tmp_path):
    code, out = run(tmp_path, "verify-solution", dict(CONFIGS["verify-solution"], scale=2.0))
    assert code == 2
    assert json.loads((out / "manifest.json").read_text())["exit_status"] == 2


def test_conjugate_matches_closed_form(tmp_path):
    code, out = run(tmp_path, "conjugate", {"x": 2.0, "t": 0.5})
    assert code == 0
    rows = list(csv.DictReader((out / "conjugate.csv").open()))
    v = np.array([float(r["v"]) for r in rows])
    val = np.array([float(r["value"]) for r in rows])
    # past |v| = 1.8 the slope of L exceeds the dual radius 64 and the slice saturates
    inner = np.abs(v) <= 1.8
    assert np.isfinite(val[inner]).all()
    assert np.max(np.abs(val[inner] - ex1_L(0.5, 2.0, v[inner]))) <= 1e-2
    assert not np.isfinite(val[np.abs(v) >= 2.05]).any()


def test_flags_override_config(tmp_path):
    code, out = run(tmp_path, "conjugate", {"count": 401}, "--x", "1.0", "--seed", "3")
    cfg = json.loads((out / "manifest.json").read_text())["config"]
    assert code == 0 and cfg["x"] == 1.0 and cfg["seed"] == 3


def test_report_all_subset_with_figures(tmp_path):
    pytest.importorskip("matplotlib")
    code, out = run(tmp_path, "report-all", {"criteria": [6, 7]}, "--figures")
    assert code == 0
    text = (out / "acceptance.txt").read_text().splitlines()
    assert len(text) == 2 and all("PASS" in ln for ln in text)
    man = json.loads((out / "manifest.json").read_text())
    assert {"acceptance.json", "acceptance.txt", "value_field.png"} <= set(man["artifacts"])
    for name, digest in man["artifacts"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
