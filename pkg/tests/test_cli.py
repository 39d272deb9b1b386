import json

import numpy as np
import pytest

from fcast_eval import cli

GRID = ["--grid-points", "51"]


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--games", 120, "--seed", 7, "--out-dir", d, *GRID) == 0
    return d


def data_args(d):
    return ["--events", d / "events.csv", "--outcomes", d / "outcomes.csv", *GRID]


def test_simulate_deterministic(tmp_path):
    for sub in ("a", "b"):
        run("simulate", "--games", 30, "--seed", 7, "--out-dir", tmp_path / "x", *GRID)
        (tmp_path / sub).write_bytes((tmp_path / "x" / "events.csv").read_bytes())
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_outputs_declare_config(sim_dir):
    first = (sim_dir / "events.csv").read_text().splitlines()[0]
    meta = json.loads(first[2:])
    assert meta["seed"] == 7 and meta["command"] == "simulate"


@pytest.mark.parametrize("argv", [["simulate", "--games", "0"],
                                  ["simulate", "--games", "10", "--alpha", "2"],
                                  ["rejection-study", "--pairing", "Ora:OraBM", "--n", "10",
                                   "--replications", "0"]])
def test_usage_errors(argv, tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(argv + ["--out-dir", str(tmp_path)])
    assert exc.value.code == 2


def test_missing_outcomes_names_path(sim_dir, tmp_path, capsys):
    code = run("calibrate", "--method", "Ora", "--events", sim_dir / "events.csv",
               "--outcomes", tmp_path / "nope.csv", "--out-dir", tmp_path, *GRID)
    assert code == 1
    assert "nope.csv" in capsys.readouterr().err


def test_empty_file_no_games(tmp_path, capsys):
    (tmp_path / "e.csv").write_text("game_id,t,forecast,home_score,away_score\n")
    (tmp_path / "o.csv").write_text("game_id,home_win,regulation_end\n")
    code = run("fit", "--model", "PgRS", "--events", tmp_path / "e.csv", "--outcomes", tmp_path / "o.csv",
               "--out-dir", tmp_path)
    assert code == 1
    assert "no games" in capsys.readouterr().err


def test_fit_homewp_constant(sim_dir, tmp_path):
    assert run("fit", "--model", "HomeWP", *data_args(sim_dir), "--out-dir", tmp_path) == 0
    doc = json.loads((tmp_path / "model_HomeWP.json").read_text())
    assert doc["spec"]["kind"] == "HomeWP"
    run("predict", "--model-file", tmp_path / "model_HomeWP.json", *data_args(sim_dir), "--out-dir", tmp_path)
    rows = [r for r in (tmp_path / "forecasts_HomeWP.csv").read_text().splitlines()[2:]]
    assert {float(r.split(",")[2]) for r in rows} == {0.593}


def test_fit_predict_skill_pipeline(sim_dir, tmp_path):
    assert run("fit", "--model", "PgRSScD", "--link", "probit", *data_args(sim_dir), "--out-dir", tmp_path) == 0
    assert run("predict", "--model-file", tmp_path / "model_PgRSScD.json", *data_args(sim_dir),
               "--out-dir", tmp_path) == 0
    assert run("skill", "--method-a", "PgRSScD", "--method-b", "CF", "--forecasts",
               tmp_path / "forecasts_PgRSScD.csv", *data_args(sim_dir), "--mc-draws", 5000,
               "--out-dir", tmp_path) == 0
    doc = json.loads((tmp_path / "skill_test.json").read_text())
    assert 0 < doc["p_value"] <= 1


def test_skill_self_comparison(sim_dir, tmp_path):
    assert run("skill", "--method-a", "Ora", "--method-b", "Ora", *data_args(sim_dir), "--mc-draws", 1000,
               "--out-dir", tmp_path) == 0
    doc = json.loads((tmp_path / "skill_test.json").read_text())
    assert doc["p_value"] == 1.0 and doc["statistic"] == 0.0
    curve = np.loadtxt(tmp_path / "skill_curve.csv", delimiter=",", skiprows=2)
    assert np.all(curve[:, 1:] == 0)


def test_skill_json_reread(sim_dir, tmp_path):
    from fcast_eval import skill
    from fcast_eval.core import TimeGrid
    from fcast_eval.ingest import load_games

    run("skill", "--method-a", "Ora", "--method-b", "OraBM1", *data_args(sim_dir), "--mc-draws", 2000,
        "--out-dir", tmp_path)
    doc = json.loads((tmp_path / "skill_test.json").read_text())
    games = load_games(sim_dir / "events.csv", sim_dir / "outcomes.csv", TimeGrid.uniform(51))
    A = np.array([g.forecasts["Ora"].values for g in games])
    B = np.array([g.forecasts["OraBM1"].values for g in games])
    stat = skill.functional_statistic(A, B, [g.outcome for g in games], TimeGrid.uniform(51))
    assert doc["statistic"] == stat


def test_calibrate_verdicts(tmp_path):
    # CF is only distinguishable from the 0.593 base rate with enough games per bin
    run("simulate", "--games", 1000, "--seed", 11, "--out-dir", tmp_path, *GRID)

    def summary(method):
        run("calibrate", "--method", method, *data_args(tmp_path), "--out-dir", tmp_path / method)
        rows = (tmp_path / method / "calibration_summary.csv").read_text().splitlines()[2:]
        return np.array([r.split(",")[-1] for r in rows])

    home, cf = summary("HomeWP"), summary("CF")
    assert np.mean(home == "calibrated") >= 0.95
    assert np.mean(cf != "calibrated") > 0.5


def test_config_file_overridden_by_flag(sim_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 3, "mc_draws": 500, "grid_points": 51}))
    run("skill", "--config", cfg, "--seed", 4, "--method-a", "Ora", "--method-b", "OraBM1",
        "--events", sim_dir / "events.csv", "--outcomes", sim_dir / "outcomes.csv", "--out-dir", tmp_path)
    meta = json.loads((tmp_path / "skill_test.json").read_text())["config"]
    assert meta["seed"] == 4 and meta["mc_draws"] == 500


def test_rejection_single_replication(tmp_path):
    run("rejection-study", "--pairing", "OraBM1:OraBM2", "--n", 20, "--replications", 1,
        "--mc-draws", 1000, "--out-dir", tmp_path, *GRID)
    row = (tmp_path / "rejection_report.csv").read_text().splitlines()[2].split(",")
    assert {float(v) for v in row[3:6]} <= {0.0, 1.0}


def test_version(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--version"])
    assert "0.1.0" in capsys.readouterr().out
