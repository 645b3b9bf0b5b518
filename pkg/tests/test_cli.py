from __future__ import annotations

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from impq.cli import CSV_HEADER, UsageError, main, parse_grid
from impq.io import save_matrix
from impq.operators import haar_random_projector


@pytest.fixture
def projector_files(tmp_path):
    paths = {}
    for name, (d, r, s) in {"p1": (3, 1, 1), "q1": (3, 2, 2), "p2": (2, 1, 3), "q2": (2, 1, 4)}.items():
        paths[name] = tmp_path / f"{name}.json"
        save_matrix(paths[name], haar_random_projector(d, r, s).matrix)
    return paths


def gap_args(paths):
    return [x for k, v in paths.items() for x in (f"--{k}", str(v))]


class TestSpin:
    def test_runs(self, tmp_path, capsys):
        out = tmp_path / "spin.json"
        assert main(["spin-example", "--json", str(out)]) == 0
        text = capsys.readouterr().out
        assert "0.250000000000" in text and "MATCH" in text
        doc = json.loads(out.read_text())
        assert doc["pass"] and doc["convention"]["P"] == "(1 - sigma_x)/2"


class TestGap:
    def test_random(self, projector_files, tmp_path):
        out = tmp_path / "gap.json"
        assert main(["gap", *gap_args(projector_files), "--json", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["gap"]["pass"] and doc["gap"]["gap"]["dim"] == 6

    def test_commuting_reports_zero(self, projector_files, tmp_path, capsys):
        projector_files["q2"] = projector_files["p2"]
        out = tmp_path / "gap.json"
        assert main(["gap", *gap_args(projector_files), "--json", str(out)]) == 0
        assert json.loads(out.read_text())["gap"]["max_abs_gap"] <= 1e-9

    def test_not_a_projector(self, projector_files, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        save_matrix(bad, np.diag([0.5, 1.0]))
        projector_files["q2"] = bad
        assert main(["gap", *gap_args(projector_files)]) == 2
        err = capsys.readouterr().err
        assert "bad.json" in err and "idempotent" in err

    def test_malformed_file(self, projector_files, tmp_path, capsys):
        bad = tmp_path / "rect.json"
        bad.write_text('{"dim": 2, "entries": [[[1, 0]]]}')
        projector_files["p1"] = bad
        assert main(["gap", *gap_args(projector_files)]) == 2
        assert "rect.json" in capsys.readouterr().err

    def test_missing_file(self, projector_files, tmp_path):
        projector_files["p1"] = tmp_path / "absent.json"
        assert main(["gap", *gap_args(projector_files)]) == 2

    def test_mismatched_dims(self, projector_files):
        projector_files["q1"] = projector_files["p2"]
        assert main(["gap", *gap_args(projector_files)]) == 2


class TestSweep:
    def test_default_grid_csv(self, tmp_path):
        out = tmp_path / "w.csv"
        assert main(["sweep", "--grid", "a:0:1:11,b:auto,phi:0:6.283:12", "--csv", str(out)]) == 0
        with open(out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == CSV_HEADER and len(rows) == 1 + 11 * 12
        vals = np.array(rows[1:], dtype=float)
        assert vals[:, 5].max() <= 1e-12
        np.testing.assert_allclose(vals[:, 1], 0.99 * np.sqrt(vals[:, 0] * (1 - vals[:, 0])))

    def test_explicit_b(self):
        assert main(["sweep", "--grid", "a:0.5,b:-0.4:0.4:5,phi:0:3:4"]) == 0

    @pytest.mark.parametrize("grid", [
        "a:0:1:11,b:0.6,phi:0",
        "a:0:1.5:3,b:0,phi:0",
        "a:0.5,b:0,phi:7",
        "a:0.5,phi:0",
        "a:0.5,b:0,phi:0,a:1",
        "a:x,b:0,phi:0",
        "c:1,a:0.5,b:0,phi:0",
        "a:0.5,b:auto:0,phi:0",
    ])
    def test_domain_violations(self, grid, capsys):
        assert main(["sweep", "--grid", grid]) == 2
        assert "error" in capsys.readouterr().err

    def test_parse(self):
        axes = parse_grid("a:0:1:3,b:auto,phi:0")
        assert axes == {"a": [0.0, 0.5, 1.0], "b": ("auto", [0.99]), "phi": [0.0]}
        assert parse_grid("a:0,b:auto:3,phi:0")["b"] == ("auto", [0.0, 0.495, 0.99])
        with pytest.raises(UsageError):
            parse_grid("a:0,b:auto:x,phi:0")

    def test_full_grid(self, tmp_path):
        out = tmp_path / "full.csv"
        assert main(["sweep", "--grid", "a:0:1:11,b:auto:11,phi:0:6.283:12", "--csv", str(out)]) == 0
        vals = np.loadtxt(out, delimiter=",", skiprows=1)
        assert vals.shape == (11 * 11 * 12, 6)
        assert vals[:, 5].max() < 1e-12 and vals[:, 3:5].min() >= -1e-12

    def test_spot_rows(self, tmp_path):
        out = tmp_path / "spots.csv"
        assert main(["sweep", "--grid", "a:0.5:1:2,b:0,phi:0", "--csv", str(out)]) == 0
        vals = np.loadtxt(out, delimiter=",", skiprows=1)
        np.testing.assert_allclose(vals[0, 3:5], [0.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(vals[1, 3:5], [1 / 12, 1 / 12], atol=1e-15)


class TestVerify:
    def test_small(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"dims": [[2, 2]], "samples_per_dim": 2, "checks": ["gap", "spin"]}))
        out = tmp_path / "rep.json"
        assert main(["verify", "--config", str(cfg), "--seed", "3", "--json", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["config"]["master_seed"] == 3 and doc["summary"]["samples"] == 2
        assert "campaign: PASS" in capsys.readouterr().out

    def test_failure_exit_and_replay_hint(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"dims": [[2, 2]], "samples_per_dim": 1, "checks": ["gap"],
                                   "tolerances": {"gap_nonzero": 10.0}}))
        assert main(["verify", "--config", str(cfg)]) == 1
        assert "--replay 2x2:" in capsys.readouterr().out

    def test_bad_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"dims": [[1, 2]]}))
        assert main(["verify", "--config", str(cfg)]) == 2
        assert main(["verify", "--config", str(tmp_path / "absent.json")]) == 2

    def test_replay(self, capsys):
        assert main(["verify", "--replay", "2x3:99"]) == 0
        assert "PASS" in capsys.readouterr().out
        assert main(["verify", "--replay", "garbage"]) == 2

    def test_usage(self):
        assert main([]) == 2
        assert main(["nope"]) == 2

    def test_module_entry(self):
        proc = subprocess.run([sys.executable, "-m", "impq", "sweep", "--grid", "a:1,b:0,phi:0"],
                              capture_output=True, text=True)
        assert proc.returncode == 0 and "sweep: PASS" in proc.stdout
