import json

import pandas as pd
import pytest
import yaml
from click.testing import CliRunner

from hubmpc.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A tiny but complete run: synthetic data, trained models, one episode each."""
    root = tmp_path_factory.mktemp("cli")
    cfg = {
        "site": {"latitude": 37.33, "longitude": -121.89},
        "battery": {"e_min": 10.0, "e_max": 90.0, "e_init": 25.0},
        "forecast": {"nu": 0.15, "max_rounds": 15, "patience": 4,
                     "n_bootstrap": 30, "alpha": 0.1, "seed": 0},
        "control": {"solver_tol": 1e-6,
                    "controllers": ["omniscient", "deterministic"]},
        "evaluation": {"test_days_per_season": 2, "first_test_day": 20, "seed": 0},
        "data": {"synthetic": {"seed": 5, "days": 24}},
        "output_dir": "out",
    }
    cfg_path = root / "config.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg))
    return root, cfg_path


def _run(*args):
    return CliRunner().invoke(main, list(args), catch_exceptions=False)


def test_validate_ok(workspace):
    _, cfg_path = workspace
    result = _run("validate", str(cfg_path))
    assert result.exit_code == 0
    assert "ok" in result.output


def test_validate_missing_file_exits_nonzero(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"data": {"paths": {"ev_power": "missing.csv"}}}))
    result = CliRunner().invoke(main, ["validate", str(bad)])
    assert result.exit_code == 1
    payload = json.loads(result.stderr.strip().splitlines()[-1])
    assert payload["error"] == "ValueError"
    assert "missing.csv" in payload["message"]


def test_synth_data_writes_schemas(workspace):
    root, cfg_path = workspace
    result = _run("synth-data", str(cfg_path))
    assert result.exit_code == 0
    data_dir = root / "out" / "data"
    frame = pd.read_csv(data_dir / "ev_power.csv")
    assert list(frame.columns) == ["timestamp", "value"]
    assert len(frame) == 24 * 96
    weather = pd.read_csv(data_dir / "weather.csv")
    assert set(weather.columns) == {"timestamp", "direct_radiation",
                                    "diffuse_radiation", "temperature", "wind_speed"}


def test_train_then_simulate_then_report(workspace):
    root, cfg_path = workspace
    assert _run("train", str(cfg_path)).exit_code == 0
    assert (root / "out" / "models" / "forecasters.npz").exists()

    for controller in ("omniscient", "deterministic", "stochastic", "recourse"):
        result = _run("simulate", str(cfg_path), "--controller", controller,
                      "--days", "1")
        assert result.exit_code == 0
    csvs = sorted((root / "out" / "episodes" / "omniscient").glob("day_*.csv"))
    assert len(csvs) == 1
    assert len(pd.read_csv(csvs[0])) == 96

    out_dir = root / "out" / "reports" / "control"
    result = _run("report", str(root / "out" / "episodes"), "--out", str(out_dir))
    assert result.exit_code == 0
    cost = pd.read_csv(out_dir / "cost_normalized.csv", index_col=0)
    assert cost.loc["All", "omniscient"] == pytest.approx(100.0)
    assert set(cost.columns) == {"omniscient", "deterministic", "stochastic",
                                 "recourse"}
    runtime = pd.read_csv(out_dir / "runtime_normalized.csv", index_col=0)
    assert runtime.loc["stochastic", "runtime_pct"] == pytest.approx(100.0)
    assert (out_dir / "figures" / "cost_normalized.png").exists()
    assert (out_dir / "control_eval.json").exists()
    traces = list((out_dir / "figures").glob("operation_*.png"))
    assert len(traces) == 4


def test_simulate_output_is_byte_deterministic(workspace, tmp_path):
    """Same seed and config fix every output byte except timing fields."""
    root, cfg_path = workspace
    cfg = yaml.safe_load(cfg_path.read_text())
    frames = []
    for i in range(2):
        cfg["output_dir"] = str(tmp_path / f"run{i}")
        p = tmp_path / f"cfg{i}.yaml"
        p.write_text(yaml.safe_dump(cfg))
        assert _run("simulate", str(p), "--controller", "omniscient",
                    "--days", "1").exit_code == 0
        csv = next((tmp_path / f"run{i}" / "episodes" / "omniscient").glob("day_*.csv"))
        frames.append(pd.read_csv(csv).drop(columns=["solve_seconds",
                                                     "step_seconds"]))
    assert frames[0].equals(frames[1])


def test_eval_forecasts_outputs(workspace):
    root, cfg_path = workspace
    result = _run("eval-forecasts", str(cfg_path))
    assert result.exit_code == 0
    rep = root / "out" / "reports"
    nmae_tbl = pd.read_csv(rep / "forecast_nmae.csv", index_col=0)
    assert {"ev", "pv", "price"} <= set(nmae_tbl.columns)
    with open(rep / "forecast_eval.json") as fh:
        payload = json.load(fh)
    assert set(payload) == {"ev", "pv", "price"}
    figures = list((rep / "figures").glob("forecast_*.png"))
    assert len(figures) == 3


def test_simulate_without_models_fails_cleanly(tmp_path):
    cfg = {
        "data": {"synthetic": {"seed": 5, "days": 24}},
        "evaluation": {"first_test_day": 20},
        "output_dir": "fresh",
    }
    cfg_path = tmp_path / "c.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg))
    runner = CliRunner()
    result = runner.invoke(main, ["simulate", str(cfg_path),
                                  "--controller", "stochastic"])
    assert result.exit_code == 1
    payload = json.loads(result.stderr.strip().splitlines()[-1])
    assert payload["error"] == "FileNotFoundError"
