"""Per-target feature recipes, window forecasting and the trained-model store.

Windows are issued at a quarter-hour step k and cover the next 96 steps (the
next 24 or 25 hours for the price model, whose grid is hourly).  Daily lag
features are taken from the last fully observed day before the issuance; the
EV model alone looks inside the current day through its 6-hour intraday lag,
which is what forces recursive prediction beyond the first 25 steps.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..bundle import DatasetBundle
from ..grid import HOURS_PER_DAY, STEP_HOURS, STEPS_PER_DAY, day_of
from . import features as ft
from .enbpi import EnbpiModel, fit_enbpi
from .gbt import GbtModel
from .scenarios import ScenarioTree, build_scenario_tree

PV_FEATURES = ("direct_radiation", "diffuse_radiation", "temperature", "wind_speed",
               "zenith_deg", "solar_time", "month", "daily_sum_lag", "daily_std_lag")
EV_FEATURES = ("month", "weekday", "hour_of_day", "daily_sum_lag", "daily_std_lag",
               "intraday_sum_lag6h")
PRICE_FEATURES = ("month", "weekday", "hour_of_day", "price_daily_std_lag",
                  "load_diff_norm", "gen_diff_norm")

RECURSION_CHUNK = ft.EV_INTRADAY_LAG_LAST  # 25 steps per batch keeps lags resolved


@dataclass(frozen=True)
class Site:
    latitude: float
    longitude: float


@dataclass(frozen=True)
class ForecastConfig:
    """Hyperparameters shared by the three target models."""

    nu: float = 0.1
    max_rounds: int = 150
    patience: int = 10
    max_depth: int = 4
    min_leaf: int = 20
    n_bootstrap: int = 30
    alpha: float = 0.1
    seed: int = 0


def pv_feature_rows(bundle: DatasetBundle, site: Site, k: int, n: int = STEPS_PER_DAY) -> np.ndarray:
    """PV features for window steps [k, k+n); weather columns are forecasts."""
    d_issue = day_of(k)
    lag_sum = ft.lagged_daily_sum(bundle.pv_power, d_issue)
    lag_std = ft.lagged_daily_std(bundle.pv_power, d_issue)
    steps = np.arange(k, k + n)
    rows = np.empty((n, len(PV_FEATURES)))
    rows[:, 0] = bundle.direct_radiation.window(k, k + n)
    rows[:, 1] = bundle.diffuse_radiation.window(k, k + n)
    rows[:, 2] = bundle.temperature.window(k, k + n)
    rows[:, 3] = bundle.wind_speed.window(k, k + n)
    for r, t in enumerate(steps):
        d = day_of(int(t))
        doy = bundle.calendar.day_of_year(d)
        clock = (t % STEPS_PER_DAY) * STEP_HOURS
        rows[r, 4] = ft.solar_zenith_deg(site.latitude, site.longitude, clock, doy)
        rows[r, 5] = ft.solar_time_hours(clock, site.longitude, doy)
        rows[r, 6] = bundle.calendar.month_of(d)
    rows[:, 7] = lag_sum
    rows[:, 8] = lag_std
    return rows


def ev_base_rows(bundle: DatasetBundle, k: int, n: int = STEPS_PER_DAY) -> np.ndarray:
    """EV features except the intraday column (filled by caller)."""
    d_issue = day_of(k)
    lag_sum = ft.lagged_daily_sum(bundle.ev_power, d_issue)
    lag_std = ft.lagged_daily_std(bundle.ev_power, d_issue)
    rows = np.empty((n, len(EV_FEATURES)))
    for r in range(n):
        t = k + r
        d = day_of(t)
        rows[r, 0] = bundle.calendar.month_of(d)
        rows[r, 1] = bundle.calendar.weekday_of(d)
        rows[r, 2] = (t % STEPS_PER_DAY) * STEP_HOURS
    rows[:, 3] = lag_sum
    rows[:, 4] = lag_std
    rows[:, 5] = np.nan
    return rows


def ev_feature_rows_observed(bundle: DatasetBundle, k: int, n: int = STEPS_PER_DAY) -> np.ndarray:
    """EV features with the intraday lag taken from observations (training use)."""
    rows = ev_base_rows(bundle, k, n)
    buf = bundle.ev_power.window(k - ft.EV_INTRADAY_LAG_FIRST, k + n - ft.EV_INTRADAY_LAG_LAST)
    for j in range(n):
        rows[j, 5] = float(np.sum(buf[j : j + 4]))
    return rows


def price_feature_rows(bundle: DatasetBundle, h0: int, n_hours: int) -> np.ndarray:
    """Price-difference features for hours [h0, h0+n_hours)."""
    d_issue = h0 // HOURS_PER_DAY
    if d_issue - 1 < 0:
        raise ValueError("price features need one full previous day")
    lag_std = ft.daily_std(bundle.price_hourly, d_issue - 1, steps_per_day=HOURS_PER_DAY)
    rows = np.empty((n_hours, len(PRICE_FEATURES)))
    for r in range(n_hours):
        h = h0 + r
        d = h // HOURS_PER_DAY
        rows[r, 0] = bundle.calendar.month_of(d)
        rows[r, 1] = bundle.calendar.weekday_of(d)
        rows[r, 2] = h % HOURS_PER_DAY
        rows[r, 3] = lag_std
        rows[r, 4] = ft.exog_normalized_diff(bundle.load_forecast_hourly, h)
        rows[r, 5] = ft.exog_normalized_diff(bundle.gen_forecast_hourly, h)
    return rows


def price_window_hours(k: int) -> tuple[int, int]:
    """Hourly window (first hour, count) covering quarter steps [k, k+96)."""
    h0 = k // 4
    phase = k % 4
    n_hours = HOURS_PER_DAY + (1 if phase else 0)
    return h0, n_hours


@dataclass(frozen=True)
class TargetModels:
    """The three fitted conformal forecasters plus site metadata."""

    ev: EnbpiModel
    pv: EnbpiModel
    price: EnbpiModel
    site: Site
    config: ForecastConfig

    # --- window forecasts ---------------------------------------------------

    def forecast_pv(self, bundle: DatasetBundle, k: int):
        """(point, lower, upper) kW over [k, k+96), clipped to nonnegative."""
        X = pv_feature_rows(bundle, self.site, k)
        point, lo, hi = self.pv.predict_interval(X)
        return np.clip(point, 0.0, None), np.clip(lo, 0.0, None), np.clip(hi, 0.0, None)

    def forecast_ev(self, bundle: DatasetBundle, k: int):
        """Recursive (point, lower, upper) kW over [k, k+96).

        Rows whose intraday window reaches past the observed history take it
        from the model's own earlier point predictions.
        """
        rows = ev_base_rows(bundle, k)
        buf = np.empty(ft.EV_INTRADAY_LAG_FIRST + STEPS_PER_DAY)
        buf[: ft.EV_INTRADAY_LAG_FIRST] = bundle.ev_power.window(
            k - ft.EV_INTRADAY_LAG_FIRST, k)
        point = np.empty(STEPS_PER_DAY)
        for lo_j in range(0, STEPS_PER_DAY, RECURSION_CHUNK):
            hi_j = min(lo_j + RECURSION_CHUNK, STEPS_PER_DAY)
            for j in range(lo_j, hi_j):
                rows[j, 5] = float(np.sum(buf[j : j + 4]))
            chunk = np.clip(self.ev.point(rows[lo_j:hi_j]), 0.0, None)
            point[lo_j:hi_j] = chunk
            buf[ft.EV_INTRADAY_LAG_FIRST + lo_j : ft.EV_INTRADAY_LAG_FIRST + hi_j] = chunk
        w = self.ev.half_width()
        return point, np.clip(point - w, 0.0, None), np.clip(point + w, 0.0, None)

    def forecast_price_hourly(self, bundle: DatasetBundle, k: int):
        """(point, lower, upper) hourly prices covering the 96-step window at k.

        The window's first hour has already started at issuance, so its price
        is a known real-time signal and replaces the model output there.
        """
        h0, n_hours = price_window_hours(k)
        X = price_feature_rows(bundle, h0, n_hours)
        dpoint, dlo, dhi = self.price.predict_interval(X)
        base = ft.reconstruct_price(np.zeros(n_hours), bundle.price_hourly, h0)
        point, lo, hi = dpoint + base, dlo + base, dhi + base
        if k % 4:
            point[0] = lo[0] = hi[0] = bundle.price_hourly.at(h0)
        return point, lo, hi

    # --- scenario assembly ----------------------------------------------------

    def scenario_tree(self, bundle: DatasetBundle, k: int, stochastic: bool) -> ScenarioTree:
        """27-branch tree from (point, p5, p95) variants, or a 1-branch point tree."""
        ev_pt, ev_lo, ev_hi = self.forecast_ev(bundle, k)
        pv_pt, pv_lo, pv_hi = self.forecast_pv(bundle, k)
        pr_pt, pr_lo, pr_hi = self.forecast_price_hourly(bundle, k)
        phase = k % 4
        if not stochastic:
            return build_scenario_tree([ev_pt], [pv_pt], [pr_pt], phase=phase)
        return build_scenario_tree([ev_pt, ev_lo, ev_hi], [pv_pt, pv_lo, pv_hi],
                                   [pr_pt, pr_lo, pr_hi], phase=phase)


def _training_days(bundle: DatasetBundle, last_day_exclusive: int) -> range:
    # day 0 has no previous day for the lag features
    return range(1, last_day_exclusive)


def build_training_matrices(bundle: DatasetBundle, site: Site, last_day_exclusive: int):
    """Per-target (X, y) built from one hour-0 issuance per usable day."""
    days = _training_days(bundle, last_day_exclusive)
    Xpv, ypv, Xev, yev, Xpr, ypr = [], [], [], [], [], []
    for d in days:
        k = d * STEPS_PER_DAY
        h = d * HOURS_PER_DAY
        Xpv.append(pv_feature_rows(bundle, site, k))
        ypv.append(bundle.pv_power.window(k, k + STEPS_PER_DAY))
        Xev.append(ev_feature_rows_observed(bundle, k))
        yev.append(bundle.ev_power.window(k, k + STEPS_PER_DAY))
        Xpr.append(price_feature_rows(bundle, h, HOURS_PER_DAY))
        ypr.append(ft.price_difference(bundle.price_hourly, h))
    stack = lambda parts: np.concatenate(parts, axis=0)
    return {
        "pv": (stack(Xpv), stack(ypv)),
        "ev": (stack(Xev), stack(yev)),
        "price": (stack(Xpr), stack(ypr)),
    }


def train_models(bundle: DatasetBundle, site: Site, cfg: ForecastConfig,
                 last_day_exclusive: int) -> TargetModels:
    """Fit the three EnbPI forecasters on data before ``last_day_exclusive``.

    The usable days split chronologically 70/15/15 into bootstrap-training,
    validation (early stopping) and calibration (extra conformity scores).
    """
    mats = build_training_matrices(bundle, site, last_day_exclusive)
    models = {}
    for name, rows_per_day in (("ev", STEPS_PER_DAY), ("pv", STEPS_PER_DAY),
                               ("price", HOURS_PER_DAY)):
        X, y = mats[name]
        n_days = len(X) // rows_per_day
        d_train = max(1, int(round(n_days * 0.70)))
        d_val = max(1, int(round(n_days * 0.15)))
        i_train = d_train * rows_per_day
        i_val = min(n_days, d_train + d_val) * rows_per_day
        model = fit_enbpi(
            X[:i_train], y[:i_train], B=cfg.n_bootstrap, alpha=cfg.alpha,
            seed=cfg.seed, X_val=X[i_train:i_val], y_val=y[i_train:i_val],
            nu=cfg.nu, max_rounds=cfg.max_rounds, patience=cfg.patience,
            max_depth=cfg.max_depth, min_leaf=cfg.min_leaf)
        if i_val < len(X):
            model = model.calibrated(X[i_val:], y[i_val:])
        models[name] = model
    return TargetModels(ev=models["ev"], pv=models["pv"], price=models["price"],
                        site=site, config=cfg)


# --- persistence -------------------------------------------------------------

_FORMAT_VERSION = 1


def _pack_gbt(prefix: str, m: GbtModel, out: dict) -> dict:
    out[f"{prefix}.rho"] = m.rho
    out[f"{prefix}.features"] = m.features
    out[f"{prefix}.thresholds"] = m.thresholds
    out[f"{prefix}.lefts"] = m.lefts
    out[f"{prefix}.rights"] = m.rights
    out[f"{prefix}.values"] = m.values
    out[f"{prefix}.scalars"] = np.array([m.f0, m.nu, m.max_depth, m.n_features,
                                         m.best_val_mae])
    return out


def _unpack_gbt(prefix: str, data) -> GbtModel:
    f0, nu, max_depth, n_features, best = data[f"{prefix}.scalars"]
    return GbtModel(
        f0=float(f0), nu=float(nu), rho=data[f"{prefix}.rho"],
        features=data[f"{prefix}.features"], thresholds=data[f"{prefix}.thresholds"],
        lefts=data[f"{prefix}.lefts"], rights=data[f"{prefix}.rights"],
        values=data[f"{prefix}.values"], max_depth=int(max_depth),
        n_features=int(n_features), best_val_mae=float(best))


def save_models(models: TargetModels, path) -> None:
    """Write the fitted models as a single self-describing npz artifact."""
    arrays: dict = {}
    meta = {
        "format_version": _FORMAT_VERSION,
        "site": asdict(models.site),
        "config": asdict(models.config),
        "targets": {},
    }
    for name in ("ev", "pv", "price"):
        em: EnbpiModel = getattr(models, name)
        meta["targets"][name] = {"n_estimators": em.n_estimators, "alpha": em.alpha}
        arrays[f"{name}.in_bag"] = em.in_bag
        arrays[f"{name}.residuals"] = em.residuals
        for b, est in enumerate(em.estimators):
            _pack_gbt(f"{name}.est{b:03d}", est, arrays)
    arrays["meta_json"] = np.array(json.dumps(meta, sort_keys=True))
    np.savez_compressed(path, **arrays)


def load_models(path) -> TargetModels:
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["meta_json"]))
    if meta.get("format_version") != _FORMAT_VERSION:
        raise ValueError(f"unsupported model artifact version: {meta.get('format_version')}")
    out = {}
    for name in ("ev", "pv", "price"):
        tmeta = meta["targets"][name]
        ests = tuple(_unpack_gbt(f"{name}.est{b:03d}", data)
                     for b in range(tmeta["n_estimators"]))
        out[name] = EnbpiModel(estimators=ests, in_bag=data[f"{name}.in_bag"],
                               residuals=data[f"{name}.residuals"], alpha=tmeta["alpha"])
    return TargetModels(ev=out["ev"], pv=out["pv"], price=out["price"],
                        site=Site(**meta["site"]), config=ForecastConfig(**meta["config"]))
