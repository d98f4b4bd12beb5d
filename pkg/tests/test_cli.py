import json

import pytest

from monadkin.cli import EXIT_CONFIG, EXIT_OK, EXIT_PHYSICS, build_parser, main

FAST = ["--grid", "256", "--dt", "1e-3", "--t-end", "0.01"]


def run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


def test_simulate_writes_reports_and_timing(tmp_path, capsys):
    assert run(tmp_path, "simulate", "--scenario", "free_gaussian", *FAST) == EXIT_OK
    assert (tmp_path / "report.json").exists() and (tmp_path / "timeseries.csv").exists()
    timing = json.loads((tmp_path / "timing.json").read_text())
    assert timing["verb"] == "simulate" and timing["wall_seconds"] >= 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert "wall_seconds" not in json.dumps(report)
    assert "pass" in capsys.readouterr().out


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('scenario = "free_gaussian"\n[grid]\npoints = 128\n[time]\nt_end = 0.01\ndt = 1e-3\n[output]\ncsv = false\n')
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--grid", "256"]) == EXIT_OK
    doc = json.loads((out / "report.json").read_text())
    assert doc["config"]["points"] == 256
    assert not (out / "timeseries.csv").exists()


@pytest.mark.parametrize("verb, name", [("compare", "comparison.json"), ("uncertainty", "uncertainty.json")])
def test_other_verbs(tmp_path, verb, name):
    assert run(tmp_path, verb, "--scenario", "free_gaussian", *FAST) == EXIT_OK
    assert json.loads((tmp_path / name).read_text())["checks"]


def test_kinetics_and_identities(tmp_path):
    cfg = tmp_path / "k.toml"
    cfg.write_text('scenario = "free_gaussian"\n[grid]\npoints = 256\n[kinetics]\ncount = 20000\nsteps = 2\n')
    assert main(["kinetics", "--config", str(cfg), "--out", str(tmp_path), "--seed", "3"]) == EXIT_OK
    doc = json.loads((tmp_path / "kinetics.json").read_text())
    assert doc["config"]["kinetics"]["seed"] == 3
    assert (tmp_path / "ensemble.csv").exists()
    assert main(["identities", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    assert all(json.loads((tmp_path / "identities.json").read_text())["checks"].values())


def test_configuration_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('scenario = "free_gaussian"\n[grid]\nnodes = 4\n')
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "grid.nodes" in capsys.readouterr().err
    assert main(["simulate", "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["simulate", "--config", str(tmp_path / "missing.toml")]) == EXIT_CONFIG
    assert main(["simulate", "--scenario", "box_eigenstate", "--solver", "madelung", "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert not (tmp_path / "o" / "timing.json").exists()


def test_physics_failure_exits_1(tmp_path):
    # a plane wave on a ring has constant density and misses the uncertainty bounds
    assert run(tmp_path, "simulate", "--scenario", "plane_wave", "--t-end", "0.001", "--dt", "1e-4") == EXIT_PHYSICS
    assert (tmp_path / "timing.json").exists()


def test_parser_lists_all_verbs():
    parser = build_parser()
    for verb in ("simulate", "compare", "kinetics", "identities", "uncertainty", "check-all"):
        assert parser.parse_args([verb]).verb == verb
    assert parser.parse_args(["check-all", "--skip", "7", "8"]).skip == [7, 8]
    with pytest.raises(SystemExit):
        parser.parse_args(["simulate", "--solver", "euler"])
