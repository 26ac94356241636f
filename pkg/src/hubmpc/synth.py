"""Deterministic synthetic dataset generator.

Stands in for the proprietary site data: a clear-sky-shaped PV plant scaled
to a 70 kW peak, Poisson EV arrivals shaped to commuter peaks with a 160 kW
aggregate peak, sinusoidal day-ahead prices with seeded spikes coupled to the
national load/generation forecasts, and a consistent carbon-intensity series.
Every series is a fixed function of (seed, days), so a bundle regenerates
bit-identically.
"""

from __future__ import annotations

import datetime as _dt
import math

import numpy as np

from .bundle import DatasetBundle
from .forecast.features import solar_zenith_deg
from .grid import HOURS_PER_DAY, STEP_HOURS, STEPS_PER_DAY, SiteCalendar, TimeSeries
from .hub import EvSession, aggregate_ev_demand

PV_PEAK_KW = 70.0
EV_PEAK_KW = 160.0
DEFAULT_LAT = 37.33
DEFAULT_LON = -121.89

_MIN_DAYS = 14


def _cos_zenith_envelope(days: int, cal: SiteCalendar, lat: float, lon: float) -> np.ndarray:
    env = np.zeros(days * STEPS_PER_DAY)
    for d in range(days):
        doy = cal.day_of_year(d)
        for q in range(STEPS_PER_DAY):
            z = solar_zenith_deg(lat, lon, q * STEP_HOURS, doy)
            env[d * STEPS_PER_DAY + q] = max(0.0, math.cos(math.radians(z)))
    return env


def _ar1(rng: np.random.Generator, n: int, rho: float, sigma: float) -> np.ndarray:
    out = np.empty(n)
    x = 0.0
    shocks = rng.normal(0.0, sigma, n)
    for i in range(n):
        x = rho * x + shocks[i]
        out[i] = x
    return out


def _arrival_rate_per_hour(hour: float, weekday: int) -> float:
    """Mean EV arrivals per hour: commuter double peak on weekdays."""
    morning = math.exp(-0.5 * ((hour - 8.5) / 1.6) ** 2)
    evening = math.exp(-0.5 * ((hour - 17.5) / 2.0) ** 2)
    midday = math.exp(-0.5 * ((hour - 13.0) / 3.0) ** 2)
    if weekday < 5:
        return 0.4 + 7.0 * morning + 5.5 * evening
    return 0.3 + 3.0 * midday


def _ev_sessions(rng: np.random.Generator, days: int, cal: SiteCalendar) -> list[EvSession]:
    sessions = []
    for d in range(days):
        wd = cal.weekday_of(d)
        for q in range(STEPS_PER_DAY):
            hour = q * STEP_HOURS
            lam = _arrival_rate_per_hour(hour, wd) * STEP_HOURS
            for _ in range(rng.poisson(lam)):
                k0 = d * STEPS_PER_DAY + q
                duration = int(rng.integers(6, 33))  # 1.5 h .. 8 h
                dur_h = duration * STEP_HOURS
                energy = float(min(rng.uniform(6.0, 32.0), 10.5 * dur_h))
                sessions.append(EvSession(arrival_step=k0, departure_step=k0 + duration,
                                          energy_kwh=energy))
    return sessions


def synth(seed: int, days: int, start_date: _dt.date | None = None,
          lat: float = DEFAULT_LAT, lon: float = DEFAULT_LON) -> DatasetBundle:
    """Generate a gap-free synthetic bundle of ``days`` days."""
    if days < _MIN_DAYS:
        raise ValueError(f"need at least {_MIN_DAYS} days of synthetic data, got {days}")
    cal = SiteCalendar(start_date or _dt.date(2020, 1, 6))
    ss = np.random.SeedSequence(seed)
    r_weather, r_ev, r_price, r_load, r_gen, r_ci = map(
        np.random.default_rng, ss.spawn(6))

    nq = days * STEPS_PER_DAY
    nh = days * HOURS_PER_DAY
    hours = np.arange(nh)
    doy_q = np.array([cal.day_of_year(d) for d in range(days)]).repeat(STEPS_PER_DAY)
    season_q = np.cos(2.0 * np.pi * (doy_q - 172) / 365.0)  # +1 mid-summer

    # --- weather and PV -----------------------------------------------------
    env = _cos_zenith_envelope(days, cal, lat, lon)
    clearness_day = np.clip(
        0.75 + _ar1(r_weather, days, 0.6, 0.18), 0.2, 1.0).repeat(STEPS_PER_DAY)
    direct = 920.0 * clearness_day ** 1.5 * env
    direct *= np.clip(1.0 + 0.06 * r_weather.normal(size=nq), 0.0, None)
    diffuse = 130.0 * (1.15 - clearness_day) * np.sqrt(env)
    diffuse *= np.clip(1.0 + 0.08 * r_weather.normal(size=nq), 0.0, None)
    temperature = (14.0 + 9.0 * season_q + 6.0 * env
                   + _ar1(r_weather, nq, 0.95, 0.5))
    wind = np.clip(4.0 + _ar1(r_weather, nq, 0.97, 0.45), 0.1, None)

    pv = (0.78 * direct + 0.35 * diffuse) / 1000.0
    pv *= np.clip(1.0 + 0.05 * r_weather.normal(size=nq), 0.0, None)
    pv *= PV_PEAK_KW / pv.max()

    # --- EV demand ----------------------------------------------------------
    sessions = _ev_sessions(r_ev, days, cal)
    ev = aggregate_ev_demand(sessions, range(nq)).values.copy()
    ev *= EV_PEAK_KW / ev.max()

    # --- national exogenous forecasts (hourly) --------------------------------
    hod = hours % HOURS_PER_DAY
    dow_h = np.array([cal.weekday_of(d) for d in range(days)]).repeat(HOURS_PER_DAY)
    season_h = season_q.reshape(-1, 4).mean(axis=1)
    load_shape = (0.72 + 0.18 * np.exp(-0.5 * ((hod - 9.0) / 2.5) ** 2)
                  + 0.24 * np.exp(-0.5 * ((hod - 19.0) / 2.5) ** 2))
    load = 9000.0 * load_shape * (1.0 - 0.08 * (dow_h >= 5)) \
        * (1.0 + 0.06 * (-season_h)) + 250.0 * _ar1(r_load, nh, 0.9, 0.5)
    env_h = env.reshape(-1, 4).mean(axis=1)
    gen = (2600.0 * env_h * clearness_day.reshape(-1, 4).mean(axis=1)
           + np.clip(1400.0 + 420.0 * _ar1(r_gen, nh, 0.96, 0.5), 150.0, None))

    # --- day-ahead price (hourly) ---------------------------------------------
    residual_norm = (load - 1.6 * gen) / 9000.0
    spikes = (r_price.random(nh) < 0.01) * r_price.uniform(40.0, 140.0, nh)
    price = (38.0 + 52.0 * residual_norm + 9.0 * (-season_h)
             + 4.5 * _ar1(r_price, nh, 0.8, 1.0) + spikes)
    price = np.clip(price, 5.0, None)

    # --- carbon intensity (quarter-hour) ---------------------------------------
    gen_q = np.repeat(gen, 4)
    load_q = np.repeat(load, 4)
    ci = 440.0 - 320.0 * (gen_q / np.maximum(load_q, 1.0)) \
        + 18.0 * _ar1(r_ci, nq, 0.9, 0.6)
    ci = np.clip(ci, 60.0, 700.0)

    mk_q = lambda vals, unit: TimeSeries(start_step=0, values=vals, unit=unit)
    return DatasetBundle(
        ev_power=mk_q(ev, "kW"),
        pv_power=mk_q(pv, "kW"),
        price_hourly=TimeSeries(start_step=0, values=price, unit="EUR/MWh"),
        load_forecast_hourly=TimeSeries(start_step=0, values=load, unit="MW"),
        gen_forecast_hourly=TimeSeries(start_step=0, values=gen, unit="MW"),
        direct_radiation=mk_q(direct, "W/m2"),
        diffuse_radiation=mk_q(diffuse, "W/m2"),
        temperature=mk_q(temperature, "degC"),
        wind_speed=mk_q(wind, "m/s"),
        carbon_intensity=mk_q(ci, "g/kWh"),
        calendar=cal,
    )
