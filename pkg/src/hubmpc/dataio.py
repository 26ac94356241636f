"""CSV ingest/serialization, run configuration and output layout.

Data interchange is CSV throughout: one ``timestamp,value`` file per series
(weather bundles its four columns into one file), ISO-8601 timestamps on a
strict quarter-hour or hourly grid starting at midnight.  An EV session table
``arrival,departure,energy_kwh`` may replace the aggregated EV power series.
Configuration is a single YAML file; see docs/config_reference.md.
"""

from __future__ import annotations

import datetime as _dt
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .bundle import HOURLY_SERIES, DatasetBundle
from .forecast.recipes import ForecastConfig, Site
from .grid import (
    HOURS_PER_DAY,
    STEPS_PER_DAY,
    SiteCalendar,
    TimeSeries,
)
from .hub import BatteryParams, EvSession, aggregate_ev_demand
from .simenv import EpisodeResult
from .synth import synth

WEATHER_COLUMNS = ("direct_radiation", "diffuse_radiation", "temperature", "wind_speed")
CONTROLLER_NAMES = ("omniscient", "deterministic", "stochastic", "recourse")


class IngestError(ValueError):
    """Schema or grid violation in an input file, with row-level context."""


# --- series CSV ---------------------------------------------------------------

def _parse_timestamps(raw, path, step_minutes: int) -> _dt.datetime:
    ts = pd.to_datetime(raw, errors="coerce")
    if ts.isna().any():
        row = int(np.flatnonzero(ts.isna().to_numpy())[0])
        raise IngestError(f"{path}: unparseable timestamp at data row {row + 1}")
    step = _dt.timedelta(minutes=step_minutes)
    t = ts.to_numpy()
    deltas = np.diff(t)
    expected = np.timedelta64(step_minutes * 60, "s")
    bad = np.flatnonzero(deltas != expected)
    if bad.size:
        i = int(bad[0])
        if deltas[i] > expected:
            missing = pd.Timestamp(t[i]) + step
            raise IngestError(f"{path}: gap in series, missing timestamp {missing}")
        raise IngestError(f"{path}: non-monotone or duplicated timestamp after row {i + 1}")
    first = pd.Timestamp(t[0]).to_pydatetime()
    if first.time() != _dt.time(0, 0):
        raise IngestError(f"{path}: series must start at midnight, got {first}")
    return first


def read_series_csv(path, columns, step_minutes: int):
    """Read a timestamped CSV; returns (start datetime, {column: float array})."""
    frame = pd.read_csv(path)
    missing = [c for c in ("timestamp", *columns) if c not in frame.columns]
    if missing:
        raise IngestError(f"{path}: missing column(s) {missing}")
    if len(frame) == 0:
        raise IngestError(f"{path}: empty file")
    first = _parse_timestamps(frame["timestamp"], path, step_minutes)
    out = {}
    for c in columns:
        vals = pd.to_numeric(frame[c], errors="coerce").to_numpy(dtype=float)
        if np.isnan(vals).any():
            row = int(np.flatnonzero(np.isnan(vals))[0])
            raise IngestError(f"{path}: non-numeric {c!r} at data row {row + 1}")
        out[c] = vals
    return first, out


def read_sessions_csv(path, start: _dt.datetime) -> list[EvSession]:
    frame = pd.read_csv(path)
    need = ("arrival", "departure", "energy_kwh")
    missing = [c for c in need if c not in frame.columns]
    if missing:
        raise IngestError(f"{path}: missing column(s) {missing}")
    sessions = []
    for i, row in frame.iterrows():
        try:
            k0 = _to_step(pd.to_datetime(row["arrival"]).to_pydatetime(), start)
            kf = _to_step(pd.to_datetime(row["departure"]).to_pydatetime(), start)
            sessions.append(EvSession(arrival_step=k0, departure_step=kf,
                                      energy_kwh=float(row["energy_kwh"])))
        except (ValueError, TypeError) as exc:
            raise IngestError(f"{path}: bad session at data row {i + 1}: {exc}") from exc
    return sessions


def _to_step(ts: _dt.datetime, start: _dt.datetime) -> int:
    delta = (ts - start).total_seconds()
    steps = delta / (15 * 60)
    if steps != int(steps):
        raise ValueError(f"timestamp {ts} is not on the quarter-hour grid")
    return int(steps)


def ingest(paths: dict[str, str | Path]) -> DatasetBundle:
    """Build a validated bundle from CSV files.

    ``paths`` maps series names (see docs/data_formats.md) to files; supply
    either ``ev_power`` or ``ev_sessions``.
    """
    starts = {}
    series: dict[str, np.ndarray] = {}
    for name in ("pv_power", "carbon_intensity", "ev_power"):
        if name == "ev_power" and "ev_power" not in paths:
            continue
        start, cols = read_series_csv(paths[name], ["value"], 15)
        starts[name] = start
        series[name] = cols["value"]
    start_w, wcols = read_series_csv(paths["weather"], WEATHER_COLUMNS, 15)
    starts["weather"] = start_w
    series.update(wcols)
    for name in HOURLY_SERIES:
        start, cols = read_series_csv(paths[name], ["value"], 60)
        starts[name] = start
        series[name] = cols["value"]
    first = next(iter(starts.values()))
    off = [n for n, s in starts.items() if s != first]
    if off:
        raise IngestError(f"series do not share a common start timestamp: {off}")
    if "ev_power" not in series:
        if "ev_sessions" not in paths:
            raise IngestError("need either an ev_power series or an ev_sessions table")
        n = len(series["pv_power"])
        sessions = read_sessions_csv(paths["ev_sessions"], first)
        series["ev_power"] = aggregate_ev_demand(sessions, range(n)).values
    cal = SiteCalendar(start_date=first.date())
    mk = lambda name, unit: TimeSeries(start_step=0, values=series[name], unit=unit)
    try:
        return DatasetBundle(
            ev_power=mk("ev_power", "kW"),
            pv_power=mk("pv_power", "kW"),
            price_hourly=mk("price_hourly", "EUR/MWh"),
            load_forecast_hourly=mk("load_forecast_hourly", "MW"),
            gen_forecast_hourly=mk("gen_forecast_hourly", "MW"),
            direct_radiation=mk("direct_radiation", "W/m2"),
            diffuse_radiation=mk("diffuse_radiation", "W/m2"),
            temperature=mk("temperature", "degC"),
            wind_speed=mk("wind_speed", "m/s"),
            carbon_intensity=mk("carbon_intensity", "g/kWh"),
            calendar=cal,
        )
    except ValueError as exc:
        raise IngestError(str(exc)) from exc


def serialize_bundle(bundle: DatasetBundle, out_dir: str | Path) -> dict[str, Path]:
    """Write a bundle back to the CSV schemas; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = _dt.datetime.combine(bundle.calendar.start_date, _dt.time())
    paths: dict[str, Path] = {}

    def stamp(n, minutes):
        return pd.date_range(start, periods=n, freq=f"{minutes}min")

    for name in ("ev_power", "pv_power", "carbon_intensity"):
        s: TimeSeries = getattr(bundle, name)
        p = out_dir / f"{name}.csv"
        pd.DataFrame({"timestamp": stamp(len(s), 15), "value": s.values}).to_csv(p, index=False)
        paths[name] = p
    w = {name: getattr(bundle, name).values for name in WEATHER_COLUMNS}
    p = out_dir / "weather.csv"
    pd.DataFrame({"timestamp": stamp(len(bundle.direct_radiation), 15), **w}).to_csv(p, index=False)
    paths["weather"] = p
    for name in HOURLY_SERIES:
        s = getattr(bundle, name)
        p = out_dir / f"{name}.csv"
        pd.DataFrame({"timestamp": stamp(len(s), 60), "value": s.values}).to_csv(p, index=False)
        paths[name] = p
    return paths


# --- run configuration ---------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    site: Site
    battery: BatteryParams
    forecast: ForecastConfig
    controllers: tuple[str, ...]
    solver_tol: float
    test_days_per_season: int
    first_test_day: int | None
    eval_seed: int
    workers: int
    synthetic: dict | None
    data_paths: dict[str, Path] | None
    output_dir: Path
    config_dir: Path = field(default=Path("."))


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    site = Site(**raw.get("site", {"latitude": 37.33, "longitude": -121.89}))
    bat_raw = raw.get("battery", {})
    if "splines" in bat_raw:
        bat_raw = dict(bat_raw, splines=tuple(tuple(s) for s in bat_raw["splines"]))
    battery = BatteryParams(**bat_raw)
    forecast = ForecastConfig(**raw.get("forecast", {}))
    control = raw.get("control", {})
    controllers = tuple(control.get("controllers", list(CONTROLLER_NAMES)))
    evaluation = raw.get("evaluation", {})
    data = raw.get("data", {})
    data_paths = None
    if "paths" in data:
        data_paths = {k: (path.parent / v if not Path(v).is_absolute() else Path(v))
                      for k, v in data["paths"].items()}
    out_raw = Path(raw.get("output_dir", "runs/default"))
    output_dir = out_raw if out_raw.is_absolute() else path.parent / out_raw
    return RunConfig(
        site=site,
        battery=battery,
        forecast=forecast,
        controllers=controllers,
        solver_tol=float(control.get("solver_tol", 1e-6)),
        test_days_per_season=int(evaluation.get("test_days_per_season", 5)),
        first_test_day=evaluation.get("first_test_day"),
        eval_seed=int(evaluation.get("seed", 0)),
        workers=int(evaluation.get("workers", 1)),
        synthetic=data.get("synthetic"),
        data_paths=data_paths,
        output_dir=output_dir,
        config_dir=path.parent,
    )


def validate_config(cfg: RunConfig) -> list[str]:
    """Invariant and reference checks; returns human-readable problems."""
    problems = []
    unknown = [c for c in cfg.controllers if c not in CONTROLLER_NAMES]
    if unknown:
        problems.append(f"unknown controller(s): {unknown}")
    if cfg.synthetic is None and cfg.data_paths is None:
        problems.append("data section needs either 'synthetic' or 'paths'")
    if cfg.synthetic is not None and cfg.synthetic.get("days", 0) < 14:
        problems.append("synthetic data needs at least 14 days")
    if cfg.data_paths is not None:
        for name, p in cfg.data_paths.items():
            if not Path(p).exists():
                problems.append(f"data path for {name!r} does not exist: {p}")
    if cfg.solver_tol <= 0:
        problems.append("solver_tol must be positive")
    if cfg.forecast.n_bootstrap < 10:
        problems.append("forecast.n_bootstrap must be at least 10")
    if not (0.0 < cfg.forecast.alpha < 1.0):
        problems.append("forecast.alpha must lie in (0, 1)")
    if cfg.test_days_per_season < 1:
        problems.append("evaluation.test_days_per_season must be positive")
    return problems


def load_bundle(cfg: RunConfig) -> DatasetBundle:
    if cfg.synthetic is not None:
        syn = dict(cfg.synthetic)
        if "start_date" in syn:
            syn["start_date"] = _dt.date.fromisoformat(str(syn["start_date"]))
        return synth(**syn)
    if cfg.data_paths is None:
        raise ValueError("config has neither synthetic nor file-based data")
    return ingest(cfg.data_paths)


def boundary_day(cfg: RunConfig, bundle: DatasetBundle) -> int:
    """First day reserved for testing; earlier days are training history."""
    if cfg.first_test_day is not None:
        b = int(cfg.first_test_day)
    else:
        b = (2 * bundle.n_days) // 3
    if not 2 <= b <= bundle.n_days - 2:
        raise ValueError(f"first test day {b} leaves no room for training or margin")
    return b


def select_test_days(cfg: RunConfig, bundle: DatasetBundle) -> list[int]:
    """Evenly spaced test days per season from the held-out range, seed-controlled.

    The last dataset day is excluded (the receding window needs one day of
    margin past each episode).
    """
    first = boundary_day(cfg, bundle)
    pool = range(first, bundle.n_days - 1)
    by_season: dict[str, list[int]] = {}
    for d in pool:
        by_season.setdefault(bundle.calendar.season_of(d), []).append(d)
    rng = np.random.default_rng(cfg.eval_seed)
    chosen: list[int] = []
    for season in sorted(by_season):
        days = by_season[season]
        want = cfg.test_days_per_season
        if len(days) <= want:
            chosen.extend(days)
            continue
        stride = len(days) / want
        offset = float(rng.uniform(0.0, stride))
        chosen.extend(days[min(int(offset + i * stride), len(days) - 1)]
                      for i in range(want))
    return sorted(set(chosen))


# --- episode output -------------------------------------------------------------

def episode_frame(result: EpisodeResult) -> pd.DataFrame:
    return pd.DataFrame({
        "step": np.arange(STEPS_PER_DAY),
        "p_ev": result.p_ev,
        "p_pv": result.p_pv,
        "p_b": result.p_b,
        "p_ib": result.p_ib,
        "p_g": result.p_g,
        "e_b": result.e_b,
        "price_per_kw_step": result.price_per_kw_step,
        "cost": result.cost,
        "emissions_g": result.emissions_g,
        "solve_seconds": result.solve_seconds,
        "step_seconds": result.step_seconds,
        "cone_residual": result.cone_residuals,
        "epigraph_gap": result.epigraph_gaps,
        "coupling_spread": result.coupling_spreads,
        "periodicity_gap": result.periodicity_gaps,
    })


def write_episode(result: EpisodeResult, calendar: SiteCalendar, out_dir: str | Path) -> Path:
    """Write one episode as CSV (per step) plus a JSON summary; returns the JSON path."""
    out_dir = Path(out_dir) / result.kind
    out_dir.mkdir(parents=True, exist_ok=True)
    episode_frame(result).to_csv(out_dir / f"day_{result.day:04d}.csv", index=False)
    summary = result.summary()
    summary["start_date"] = calendar.start_date.isoformat()
    json_path = out_dir / f"day_{result.day:04d}.json"
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return json_path


def read_summaries(paths) -> tuple[list[dict], SiteCalendar]:
    """Load episode summaries from JSON files and/or directories."""
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.rglob("day_*.json")))
        else:
            files.append(p)
    if not files:
        raise ValueError("no episode summaries found")
    summaries = []
    starts = set()
    for f in files:
        with open(f) as fh:
            s = json.load(fh)
        summaries.append(s)
        starts.add(s.get("start_date"))
    if len(starts) != 1:
        raise ValueError(f"episode summaries disagree on the dataset start date: {starts}")
    (start,) = starts
    return summaries, SiteCalendar(_dt.date.fromisoformat(start))
