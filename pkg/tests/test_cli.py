import json

import pytest

from nestcoal import cli


def test_simulate_to_absorption(out_dir):
    out = out_dir / "t.csv"
    assert cli.main(["simulate", "--species", "2", "--lineages", "1", "--rate-c", "1",
                     "--seed", "1", "--to-absorption", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,S,N" and len(lines) == 4
    manifest = json.loads((out_dir / "t.csv.manifest.json").read_text())
    assert manifest["command"] == "simulate" and manifest["seed"] == 1
    assert manifest["outputs"] == [str(out)]


def test_simulate_default_dir_and_replay(out_dir):
    args = ["simulate", "--species", "5", "--lineages", "5", "--rate-c", "1", "--t-max", "0.3",
            "--decimate", "all-events"]
    assert cli.main(args) == 0
    first = (out_dir / "trajectory.csv").read_text()
    (out_dir / "trajectory.csv").unlink()
    assert cli.main(["replay", str(out_dir / "trajectory.csv.manifest.json")]) == 0
    assert (out_dir / "trajectory.csv").read_text() == first


@pytest.mark.parametrize("args", [
    ["simulate", "--species", "0", "--lineages", "1", "--rate-c", "1", "--to-absorption"],
    ["simulate", "--species", "2", "--lineages", "1", "--rate-c", "1"],
    ["simulate", "--species", "2", "--lineages", "1", "--rate-c", "1", "--t-max", "1",
     "--decimate", "bogus"],
    ["verify", "--suite", "bogus"],
    ["estimate-gamma", "--method", "sandwich", "--depth", "99"],
    ["ltt", "--config", "/nonexistent.json"],
    ["replay", "/nonexistent.json"],
])
def test_config_errors_exit_2(out_dir, args):
    assert cli.main(args) == 2


def test_bounds(out_dir):
    assert cli.main(["estimate-gamma", "--method", "bounds"]) == 0
    d = json.loads((out_dir / "gamma_bounds.json").read_text())
    assert set(d) >= {"lower", "upper", "jensen_residual"}


def test_nonconvergence_exit_3(out_dir):
    out = out_dir / "r.json"
    code = cli.main(["estimate-gamma", "--method", "rde", "--particles", "5000", "--tol", "1e-12",
                     "--max-iter", "2", "--out", str(out)])
    assert code == 3
    assert len(json.loads(out.read_text())["distance_sequence"]) == 2


def test_sandwich_small(out_dir):
    out = out_dir / "g.json"
    assert cli.main(["estimate-gamma", "--method", "sandwich", "--depth", "6", "--replicates",
                     "500", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["replicates"] == 500 and d["mean_lower"] <= d["mean_upper"]


def test_ltt_assertion_failure_exit_4(out_dir, tmp_path):
    cfg = {"seed": 1, "seeds_per_set": 2, "grid_points": 6, "gamma": 3.4466, "svg": False,
           "sets": [{"name": "p", "kind": "prop2", "species": 50, "lineages": 50, "rate_c": 1,
                     "window": [0.1, 1.0], "max_deviation": 1e-6}]}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert cli.main(["ltt", "--config", str(path), "--out-dir", str(out_dir / "ltt")]) == 4
    manifest = json.loads((out_dir / "ltt" / "manifest.json").read_text())
    assert manifest["command"] == "ltt" and manifest["config"]["gamma"] == 3.4466


def test_verify_nested(out_dir):
    assert cli.main(["verify", "--suite", "nested", "--seed", "1"]) == 0
    checks = json.loads((out_dir / "verify_nested.json").read_text())
    assert all(c["passed"] for c in checks)


def test_verify_core_has_yule_check(out_dir, capsys):
    assert cli.main(["verify", "--suite", "core", "--seed", "1"]) == 0
    assert "Yule time-change mean: pass" in capsys.readouterr().out


def test_replay_sandwich_with_other_workers(out_dir):
    out = out_dir / "g.json"
    assert cli.main(["estimate-gamma", "--method", "sandwich", "--depth", "8", "--replicates",
                     "3000", "--workers", "1", "--out", str(out)]) == 0
    first = out.read_bytes()
    manifest = out_dir / "g.json.manifest.json"
    m = json.loads(manifest.read_text())
    m["argv"][m["argv"].index("--workers") + 1] = "4"
    manifest.write_text(json.dumps(m))
    out.unlink()
    assert cli.main(["replay", str(manifest)]) == 0
    assert out.read_bytes() == first
