import csv
import json

import numpy as np
import pytest

from nera.calibration import simulate_series
from nera.cli import (BOUNDARY_HEADER, EQUILIBRIA_HEADER, LYAPUNOV_HEADER, PEAKS_HEADER,
                      STABILITY_HEADER, TRAJECTORY_HEADER, run)
from nera.model import PRESETS, ParameterSet


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_unknown_subcommand_exits_2(capsys):
    assert run(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_parameters_exit_2(tmp_path, capsys):
    assert run(["equilibria", "--out-dir", str(tmp_path)]) == 2
    assert "no parameters" in capsys.readouterr().err


def test_bad_config_reports_line_and_field(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("r1 = 0.4\n\nt_end = soon\n")
    assert run(["simulate", "--preset", "colorado", "--config", str(cfg),
                "--out-dir", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert f"{cfg}:3: t_end" in err
    cfg.write_text("colour = blue\n")
    assert run(["simulate", "--preset", "colorado", "--config", str(cfg)]) == 2


def test_incomplete_parameter_config(tmp_path, capsys):
    cfg = tmp_path / "p.cfg"
    cfg.write_text("r1 = 0.4\nbeta1 = 0.2\n")
    assert run(["equilibria", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2
    assert "missing parameter" in capsys.readouterr().err


def test_equilibria_csv(tmp_path):
    assert run(["equilibria", "--preset", "colorado", "--out-dir", str(tmp_path)]) == 0
    table = rows(tmp_path / "equilibria.csv")
    assert table[0] == EQUILIBRIA_HEADER
    body = {r[0]: r for r in table[1:5]}
    assert list(body) == ["O", "I1", "I2", "J2"]
    for r in body.values():
        assert float(r[5]) < 1e-10 and r[6] == "true"
    manifest = json.loads((tmp_path / "equilibria_manifest.json").read_text())
    assert manifest["subcommand"] == "equilibria"
    assert manifest["outputs"] == ["equilibria.csv"]
    assert manifest["config"]["parameters"] == PRESETS["colorado"].as_dict()


def test_stability_csv_and_numeric_failure(tmp_path, capsys):
    assert run(["stability", "--preset", "washington", "--label", "J2",
                "--out-dir", str(tmp_path)]) == 0
    table = rows(tmp_path / "stability.csv")
    assert table[0] == STABILITY_HEADER and len(table) == 5
    assert {r[4] for r in table[1:]} == {"SaddleFocus"}
    # the Colorado face point lies outside the cone
    assert run(["stability", "--preset", "colorado", "--label", "I3",
                "--out-dir", str(tmp_path)]) == 1
    assert "not a feasible equilibrium" in capsys.readouterr().err


def test_simulate_rerun_from_manifest_is_bit_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = tmp_path / "run.cfg"
    cfg.write_text("t_end = 200\nscheme = dp54\ns0 = 0.3, 0.2, 0.1, 0.05\nbeta1 = 0.25\n")
    assert run(["simulate", "--preset", "washington", "--config", str(cfg),
                "--out-dir", str(a)]) == 0
    assert rows(a / "trajectory.csv")[0] == TRAJECTORY_HEADER
    assert run(["simulate", "--config", str(a / "simulate_manifest.json"),
                "--out-dir", str(b)]) == 0
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
    settings = json.loads((b / "simulate_manifest.json").read_text())["config"]["settings"]
    assert settings["scheme"] == "dp54" and settings["t_end"] == 200.0


def test_simulate_failure_exits_1(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("beta1 = 50000\nt_end = 10\n")
    assert run(["simulate", "--preset", "colorado", "--config", str(cfg),
                "--out-dir", str(tmp_path)]) == 1
    assert "integration aborted" in capsys.readouterr().err
    assert (tmp_path / "trajectory.csv").exists()


def test_lyapunov_csv(tmp_path):
    cfg = tmp_path / "l.cfg"
    cfg.write_text("total_time = 1e4\ntangent_transient = 1e3\ntransient = 1e3\ntrace = yes\n")
    assert run(["lyapunov", "--preset", "colorado", "--config", str(cfg), "--range", "0.3,0.6",
                "--steps", "2", "--out-dir", str(tmp_path)]) == 0
    table = rows(tmp_path / "lyapunov.csv")
    assert table[0] == LYAPUNOV_HEADER
    assert [float(r[0]) for r in table[1:]] == [0.3, 0.6]
    assert (tmp_path / "lyapunov_trace.csv").exists()


def test_bifurcate_outputs_and_failure_marker(tmp_path, capsys):
    cfg = tmp_path / "b.cfg"
    cfg.write_text("transient = 200\nwindow = 200\nmax_window = 200\nmax_transient = 200\n")
    code = run(["bifurcate", "--preset", "colorado", "--config", str(cfg),
                "--range", "0.7,30000", "--steps", "3", "--out-dir", str(tmp_path)])
    assert code == 1
    assert "beta1=30000" in capsys.readouterr().err
    assert rows(tmp_path / "bifurcation.csv")[0] == PEAKS_HEADER
    assert rows(tmp_path / "boundaries.csv")[0] == BOUNDARY_HEADER
    samples = rows(tmp_path / "bifurcation_samples.csv")
    assert samples[-1][1] == "" and samples[-1][4]


def test_calibrate_round_trip_and_rerun(tmp_path):
    data = tmp_path / "obs.csv"
    series = simulate_series(PRESETS["washington"], (0.6, 0.2, 0.1, 0.05), np.arange(11.0))
    with open(data, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "N", "E", "R", "A"])
        w.writerows(series.to_rows())
    ga = tmp_path / "ga.cfg"
    ga.write_text("population_size = 40\ngenerations = 20\n")
    out1, out2 = tmp_path / "c1", tmp_path / "c2"
    assert run(["calibrate", "--data", str(data), "--ga", str(ga), "--seed", "3",
                "--out-dir", str(out1)]) == 0
    best = ParameterSet.load(out1 / "best_params.cfg")
    assert best.h == 0.5
    hist = rows(out1 / "fitness_history.csv")
    assert hist[0] == ["generation", "best_fitness", "mean_fitness"] and len(hist) == 21
    assert run(["calibrate", "--data", str(data), "--config",
                str(out1 / "calibrate_manifest.json"), "--out-dir", str(out2)]) == 0
    assert ((out1 / "best_params.cfg").read_bytes() == (out2 / "best_params.cfg").read_bytes())
    ga.write_text("pop = 3\n")
    assert run(["calibrate", "--data", str(data), "--ga", str(ga)]) == 2


@pytest.mark.slow
def test_reproduce_washington_lists_both_boundaries(tmp_path):
    assert run(["reproduce", "washington", "--out-dir", str(tmp_path)]) == 0
    for f in ("equilibria.csv", "stability.csv", "bifurcation.csv", "boundaries.csv",
              "lyapunov.csv", "reproduce_manifest.json"):
        assert (tmp_path / f).exists()
    found = [float(r[0]) for r in rows(tmp_path / "boundaries.csv")[1:]]
    for target in (0.335, 0.357):
        assert any(abs(f - target) <= 0.02 for f in found), found
