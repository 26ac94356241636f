"""Forecast accuracy/coverage metrics and controller comparison tables.

nMAE normalizes the mean absolute error by the range of the absolute errors
over the whole test set of a target series (not per day), so a season's value
is its mean error over the global range.  Controller tables normalize cost
and emissions to the Omniscient controller = 100 and runtime to the
Stochastic controller = 100.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .bundle import DatasetBundle
from .grid import HOURS_PER_DAY, STEPS_PER_DAY, SiteCalendar
from .simenv import EpisodeResult

log = logging.getLogger(__name__)

SEASON_ORDER = ("Winter", "Spring", "Summer", "Autumn")


def nmae(y, yhat) -> float:
    """Mean absolute error normalized by the range of the absolute errors.

    Returns NaN (with a logged diagnostic) when all absolute errors are equal,
    which makes the range normalization undefined.
    """
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.size == 0:
        raise ValueError("observations and predictions must be nonempty and aligned")
    ae = np.abs(y - yhat)
    span = float(ae.max() - ae.min())
    if span == 0.0:
        log.warning("nMAE undefined: absolute-error range is zero (n=%d)", y.size)
        return math.nan
    return float(ae.sum() / (y.size * span))


def cpi(y, lower, upper) -> float:
    """Fraction of observations inside the closed interval [lower, upper]."""
    y = np.asarray(y, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if not (y.shape == lower.shape == upper.shape) or y.size == 0:
        raise ValueError("interval arrays must be nonempty and aligned")
    return float(np.mean((y >= lower) & (y <= upper)))


def season_of(d: int, calendar: SiteCalendar) -> str:
    """Meteorological season of day index ``d``."""
    return calendar.season_of(d)


def normalize_table(raw: dict[str, float], reference: str) -> dict[str, float]:
    """Scale every entry to percent of the reference entry."""
    if reference not in raw:
        raise ValueError(f"reference controller {reference!r} missing from table")
    ref = raw[reference]
    if ref == 0.0:
        raise ValueError("reference value is zero; normalization undefined")
    return {name: 100.0 * value / ref for name, value in raw.items()}


@dataclass(frozen=True)
class ForecastEval:
    """Pooled accuracy/coverage of hour-0 issuances for one target series."""

    target: str
    per_season: pd.DataFrame      # rows: seasons + "All"; columns: nmae, cpi, n_obs
    per_step_nmae: np.ndarray     # horizon-step breakdown over the global AE range


def _eval_target(name, y, yhat, lo, hi, seasons, steps_per_window) -> ForecastEval:
    y = np.concatenate(y)
    yhat = np.concatenate(yhat)
    lo = np.concatenate(lo)
    hi = np.concatenate(hi)
    season_per_obs = np.repeat(seasons, steps_per_window)
    ae = np.abs(y - yhat)
    span = float(ae.max() - ae.min())
    rows = []
    for season in SEASON_ORDER:
        mask = season_per_obs == season
        if not mask.any():
            continue
        mean_ae = float(ae[mask].mean())
        rows.append({
            "season": season,
            "nmae": mean_ae / span if span > 0 else math.nan,
            "cpi": cpi(y[mask], lo[mask], hi[mask]),
            "n_obs": int(mask.sum()),
        })
    rows.append({"season": "All", "nmae": nmae(y, yhat), "cpi": cpi(y, lo, hi),
                 "n_obs": int(y.size)})
    per_step = np.abs((y - yhat).reshape(-1, steps_per_window)).mean(axis=0)
    per_step = per_step / span if span > 0 else np.full(steps_per_window, math.nan)
    return ForecastEval(target=name, per_season=pd.DataFrame(rows).set_index("season"),
                        per_step_nmae=per_step)


def evaluate_forecasts(models, bundle: DatasetBundle, test_days) -> dict[str, ForecastEval]:
    """Score the 24 h-ahead forecasts issued at hour 0 of each test day."""
    test_days = list(test_days)
    acc = {t: ([], [], [], []) for t in ("ev", "pv", "price")}
    for d in test_days:
        k = d * STEPS_PER_DAY
        h = d * HOURS_PER_DAY
        for target, (pt, lo, hi), truth in (
            ("ev", models.forecast_ev(bundle, k),
             bundle.ev_power.window(k, k + STEPS_PER_DAY)),
            ("pv", models.forecast_pv(bundle, k),
             bundle.pv_power.window(k, k + STEPS_PER_DAY)),
            ("price", models.forecast_price_hourly(bundle, k),
             bundle.price_hourly.window(h, h + HOURS_PER_DAY)),
        ):
            ys, pts, los, his = acc[target]
            ys.append(truth)
            pts.append(pt[: len(truth)])
            los.append(lo[: len(truth)])
            his.append(hi[: len(truth)])
    seasons = np.array([season_of(d, bundle.calendar) for d in test_days])
    return {
        "ev": _eval_target("ev", *acc["ev"], seasons, STEPS_PER_DAY),
        "pv": _eval_target("pv", *acc["pv"], seasons, STEPS_PER_DAY),
        "price": _eval_target("price", *acc["price"], seasons, HOURS_PER_DAY),
    }


def forecast_plot_frame(models, bundle: DatasetBundle, day: int, target: str) -> pd.DataFrame:
    """Observed vs predicted vs interval for one day, ready for plotting."""
    k = day * STEPS_PER_DAY
    if target == "ev":
        pt, lo, hi = models.forecast_ev(bundle, k)
        obs = bundle.ev_power.window(k, k + STEPS_PER_DAY)
    elif target == "pv":
        pt, lo, hi = models.forecast_pv(bundle, k)
        obs = bundle.pv_power.window(k, k + STEPS_PER_DAY)
    elif target == "price":
        h = day * HOURS_PER_DAY
        pt, lo, hi = models.forecast_price_hourly(bundle, k)
        obs = bundle.price_hourly.window(h, h + HOURS_PER_DAY)
        pt, lo, hi = pt[:HOURS_PER_DAY], lo[:HOURS_PER_DAY], hi[:HOURS_PER_DAY]
    else:
        raise ValueError(f"unknown target {target!r}")
    return pd.DataFrame({
        "step": np.arange(len(obs)),
        "observed": obs,
        "predicted": pt,
        "lower": lo,
        "upper": hi,
        "abs_error": np.abs(obs - pt),
    })


def operation_trace_frame(result: EpisodeResult) -> pd.DataFrame:
    """Per-step hub operation trace of one episode (residual load, dispatch, state)."""
    return pd.DataFrame({
        "step": np.arange(STEPS_PER_DAY),
        "p_ev": result.p_ev,
        "p_pv": result.p_pv,
        "residual_load": result.p_ev - result.p_pv,
        "p_b": result.p_b,
        "p_ib": result.p_ib,
        "p_g": result.p_g,
        "e_b": result.e_b,
        "price_per_kw_step": result.price_per_kw_step,
        "cost": result.cost,
        "emissions_g": result.emissions_g,
    })


def _daily_frame(summaries, calendar: SiteCalendar) -> pd.DataFrame:
    rows = []
    for s in summaries:
        rows.append({
            "controller": s["controller"],
            "day": s["day"],
            "season": season_of(s["day"], calendar),
            "cost": s["total_cost"],
            "emissions_kg": s["total_emissions_g"] / 1000.0,
            "runtime_seconds": s["runtime_seconds"],
        })
    return pd.DataFrame(rows)


def control_tables(summaries, calendar: SiteCalendar) -> dict[str, pd.DataFrame]:
    """Per-season controller comparison tables (raw and normalized).

    ``summaries`` is an iterable of :meth:`EpisodeResult.summary` dicts (or
    the same dicts read back from disk).  Cost and emissions are normalized
    per season to Omniscient = 100 when an omniscient run is present; runtime
    is normalized to Stochastic = 100.
    """
    frame = _daily_frame(summaries, calendar)
    controllers = list(dict.fromkeys(frame["controller"]))
    seasons = [s for s in SEASON_ORDER if s in set(frame["season"])] + ["All"]

    def season_mean(metric: str) -> pd.DataFrame:
        rows = {}
        for season in seasons:
            sub = frame if season == "All" else frame[frame["season"] == season]
            rows[season] = {c: float(sub[sub["controller"] == c][metric].mean())
                            for c in controllers}
        return pd.DataFrame(rows).T[controllers]

    out = {"cost_raw": season_mean("cost"), "emissions_raw": season_mean("emissions_kg")}
    runtime = pd.DataFrame({
        "runtime_minutes": {c: float(frame[frame["controller"] == c]
                                     ["runtime_seconds"].mean()) / 60.0
                            for c in controllers}})
    out["runtime_raw"] = runtime
    if "omniscient" in controllers:
        for key in ("cost", "emissions"):
            raw = out[f"{key}_raw"]
            out[key + "_normalized"] = raw.apply(
                lambda row: pd.Series(normalize_table(row.to_dict(), "omniscient")),
                axis=1)
    if "stochastic" in controllers:
        norm = normalize_table(runtime["runtime_minutes"].to_dict(), "stochastic")
        out["runtime_normalized"] = pd.DataFrame({"runtime_pct": norm})
    return out
