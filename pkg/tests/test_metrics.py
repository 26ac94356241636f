import datetime
import logging
import math

import numpy as np
import pandas as pd
import pytest

from hubmpc.grid import SiteCalendar
from hubmpc.metrics import (
    control_tables,
    cpi,
    evaluate_forecasts,
    forecast_plot_frame,
    nmae,
    normalize_table,
    operation_trace_frame,
    season_of,
)


def test_nmae_example_three_errors():
    y = np.array([0.0, 0.0, 0.0])
    yhat = np.array([0.0, 1.0, 2.0])
    assert nmae(y, yhat) == pytest.approx(0.5)


def test_nmae_example_four_errors():
    y = np.zeros(4)
    yhat = np.array([1.0, 1.0, 1.0, 3.0])
    assert nmae(y, yhat) == pytest.approx(0.75)


def test_nmae_degenerate_returns_nan(caplog):
    with caplog.at_level(logging.WARNING):
        out = nmae(np.array([1.0, 2.0]), np.array([1.0, 2.0]))
    assert math.isnan(out)
    assert any("undefined" in r.message for r in caplog.records)


def test_nmae_scale_invariance():
    rng = np.random.default_rng(0)
    y = rng.normal(50, 10, 200)
    yhat = y + rng.normal(0, 5, 200)
    for c in (0.001, 3.0, 1e4):
        assert nmae(c * y, c * yhat) == pytest.approx(nmae(y, yhat))


def test_cpi_examples():
    y = np.arange(10.0)
    lo = y - 1.0
    hi = y + 1.0
    lo[3] = y[3] + 0.5  # push one observation outside
    assert cpi(y, lo, hi) == pytest.approx(0.9)
    assert cpi(y, y, y) == 1.0
    assert cpi(y, y + 1.0, y + 2.0) == 0.0


def test_cpi_monotone_transform_invariance():
    rng = np.random.default_rng(1)
    y = rng.normal(size=300)
    lo = y - rng.uniform(0, 2, 300)
    hi = y + rng.uniform(0, 2, 300)
    f = lambda v: np.exp(v / 3.0) + 1.0  # strictly monotone
    assert cpi(f(y), f(lo), f(hi)) == cpi(y, lo, hi)


def test_season_of_dates():
    cal = SiteCalendar(datetime.date(2020, 1, 6))
    assert season_of(0, cal) == "Winter"
    assert season_of(80, cal) == "Spring"    # 2020-03-26
    assert season_of(170, cal) == "Summer"   # 2020-06-24
    assert season_of(270, cal) == "Autumn"   # 2020-10-02


def test_normalize_table_paper_example():
    out = normalize_table({"omniscient": 10.0, "deterministic": 11.365}, "omniscient")
    assert out["omniscient"] == 100.0
    assert out["deterministic"] == pytest.approx(113.65)


def test_normalize_table_equal_values():
    out = normalize_table({"a": 3.3, "b": 3.3}, "a")
    assert out == {"a": 100.0, "b": 100.0}


def test_normalize_table_runtime_reference():
    out = normalize_table({"omniscient": 0.043, "stochastic": 0.743}, "stochastic")
    assert out["stochastic"] == 100.0
    assert out["omniscient"] == pytest.approx(5.787, abs=0.01)


def test_normalize_table_errors():
    with pytest.raises(ValueError):
        normalize_table({"a": 1.0}, "missing")
    with pytest.raises(ValueError):
        normalize_table({"a": 0.0}, "a")


def _summary(controller, day, cost, co2=1000.0, runtime=1.0):
    return {"controller": controller, "day": day, "total_cost": cost,
            "total_emissions_g": co2, "runtime_seconds": runtime}


def test_control_tables_normalization():
    cal = SiteCalendar(datetime.date(2020, 1, 6))
    summaries = [
        _summary("omniscient", 2, 100.0, runtime=0.1),
        _summary("omniscient", 3, 110.0, runtime=0.1),
        _summary("stochastic", 2, 113.0, runtime=2.0),
        _summary("stochastic", 3, 120.0, runtime=2.0),
    ]
    tables = control_tables(summaries, cal)
    cost = tables["cost_normalized"]
    assert cost.loc["All", "omniscient"] == 100.0
    assert cost.loc["All", "stochastic"] == pytest.approx(100.0 * 116.5 / 105.0)
    rt = tables["runtime_normalized"]
    assert rt.loc["stochastic", "runtime_pct"] == 100.0
    assert rt.loc["omniscient", "runtime_pct"] == pytest.approx(5.0)


def test_seasonal_aggregation_weights():
    # with equal day counts per season the overall equals the season mean
    cal = SiteCalendar(datetime.date(2020, 1, 6))
    winter_day, spring_day = 2, 80
    summaries = [_summary("omniscient", winter_day, 100.0),
                 _summary("omniscient", spring_day, 140.0)]
    tables = control_tables(summaries, cal)
    raw = tables["cost_raw"]
    assert raw.loc["All", "omniscient"] == pytest.approx(
        (raw.loc["Winter", "omniscient"] + raw.loc["Spring", "omniscient"]) / 2.0)


def test_evaluate_forecasts_shapes(models30, bundle45):
    evals = evaluate_forecasts(models30, bundle45, [41, 42])
    for target, e in evals.items():
        assert "All" in e.per_season.index
        assert 0.0 <= e.per_season.loc["All", "cpi"] <= 1.0
        expected = 96 if target != "price" else 24
        assert len(e.per_step_nmae) == expected
    assert evals["ev"].per_season.loc["All", "n_obs"] == 2 * 96
    assert evals["price"].per_season.loc["All", "n_obs"] == 2 * 24


def test_plot_frames(models30, bundle45, battery, solver):
    frame = forecast_plot_frame(models30, bundle45, 41, "pv")
    assert list(frame.columns) == ["step", "observed", "predicted", "lower",
                                   "upper", "abs_error"]
    assert len(frame) == 96
    assert (frame["upper"] >= frame["lower"]).all()

    from hubmpc.mpc import ControllerKind
    from hubmpc.simenv import run_episode
    res = run_episode(ControllerKind.OMNISCIENT, 41, bundle45, battery, solver)
    trace = operation_trace_frame(res)
    assert len(trace) == 96
    np.testing.assert_allclose(trace["residual_load"],
                               trace["p_ev"] - trace["p_pv"], atol=1e-12)
