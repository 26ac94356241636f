"""Feature primitives: lagged aggregates, differencing and solar geometry.

Every helper takes explicit step/day indices so that leakage is auditable:
nothing here reads past the index it is given.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from ..grid import (
    HOURS_PER_DAY,
    STEP_HOURS,
    STEPS_PER_DAY,
    SiteCalendar,
    TimeSeries,
)

log = logging.getLogger(__name__)

EV_INTRADAY_LAG_FIRST = 28   # window [k-28, k-25]: the hour ending 6 h before k
EV_INTRADAY_LAG_LAST = 25


def daily_sum(series: TimeSeries, d: int, steps_per_day: int = STEPS_PER_DAY) -> float:
    """Total of day ``d`` for a series with ``steps_per_day`` samples per day."""
    lo = steps_per_day * d
    return float(np.sum(series.window(lo, lo + steps_per_day)))


def lagged_daily_sum(series: TimeSeries, d: int, lag: int = 1) -> float:
    """Daily total of day ``d - lag`` on the quarter-hour grid."""
    if d - lag < 0:
        raise ValueError(f"day {d} with lag {lag} reaches before the dataset start")
    return daily_sum(series, d - lag)


def daily_std(series: TimeSeries, d: int, steps_per_day: int = STEPS_PER_DAY) -> float:
    """Population standard deviation of day ``d`` (divisor = samples per day)."""
    lo = steps_per_day * d
    vals = series.window(lo, lo + steps_per_day)
    avg = vals.mean()
    return float(np.sqrt(np.mean((vals - avg) ** 2)))


def lagged_daily_std(series: TimeSeries, d: int) -> float:
    """Previous day's quarter-hour standard deviation."""
    if d - 1 < 0:
        raise ValueError(f"day {d} has no previous day")
    return daily_std(series, d - 1)


def ev_intraday_lag(values: np.ndarray, j: int) -> float:
    """Sum of the four quarter-hour samples on [j-28, j-25] of ``values``.

    ``values`` is any buffer whose index j-28 exists; callers splice observed
    history with their own earlier predictions before asking.
    """
    if j - EV_INTRADAY_LAG_FIRST < 0:
        raise ValueError("insufficient history for the intraday lag window")
    return float(np.sum(values[j - EV_INTRADAY_LAG_FIRST : j - EV_INTRADAY_LAG_LAST + 1]))


def price_difference(series_hourly: TimeSeries, h: int, n_hours: int = HOURS_PER_DAY) -> np.ndarray:
    """24 h differences p[h+j] - p[h+j-24] for j in [0, n_hours)."""
    if not series_hourly.covers(h - HOURS_PER_DAY, h + n_hours):
        raise ValueError("insufficient price history for differencing")
    ahead = series_hourly.window(h, h + n_hours)
    behind = series_hourly.window(h - HOURS_PER_DAY, h + n_hours - HOURS_PER_DAY)
    return ahead - behind


def reconstruct_price(diffs: np.ndarray, series_hourly: TimeSeries, h: int) -> np.ndarray:
    """Add the observed 24 h-lagged window back onto predicted differences.

    The lag window may reach up to hour ``h`` itself (hourly prices count as
    observed from the start of their hour).
    """
    n = len(diffs)
    behind = series_hourly.window(h - HOURS_PER_DAY, h + n - HOURS_PER_DAY)
    return np.asarray(diffs, dtype=float) + behind


def exog_normalized_diff(forecast_hourly: TimeSeries, h: int) -> float:
    """(P[h] - P[h-24]) normalized by the maximum over hour h's day."""
    d = h // HOURS_PER_DAY
    lo = HOURS_PER_DAY * d
    day_max = float(np.max(forecast_hourly.window(lo, lo + HOURS_PER_DAY)))
    if day_max == 0.0:
        log.warning("exogenous forecast day %d has zero maximum; feature set to 0", d)
        return 0.0
    return (forecast_hourly.at(h) - forecast_hourly.at(h - HOURS_PER_DAY)) / day_max


# --- solar geometry -------------------------------------------------------

def declination_deg(day_of_year: int) -> float:
    """Solar declination (Cooper's formula), degrees."""
    return 23.44 * math.sin(2.0 * math.pi * (284 + day_of_year) / 365.0)


def equation_of_time_minutes(day_of_year: int) -> float:
    """Clock-vs-sun offset in minutes (Spencer's series)."""
    b = 2.0 * math.pi * (day_of_year - 1) / 365.0
    return 229.18 * (0.000075 + 0.001868 * math.cos(b) - 0.032077 * math.sin(b)
                     - 0.014615 * math.cos(2 * b) - 0.04089 * math.sin(2 * b))


def solar_time_hours(clock_hour: float, lon: float, day_of_year: int) -> float:
    """Local apparent solar time assuming clock time on the site's zone meridian."""
    meridian = round(lon / 15.0) * 15.0
    return clock_hour + equation_of_time_minutes(day_of_year) / 60.0 + (lon - meridian) / 15.0


def solar_zenith_deg(lat: float, lon: float, clock_hour: float, day_of_year: int) -> float:
    """Zenith angle from declination plus hour angle (low-precision, ~0.5 deg)."""
    decl = math.radians(declination_deg(day_of_year))
    st = solar_time_hours(clock_hour, lon, day_of_year)
    hour_angle = math.radians(15.0 * (st - 12.0))
    phi = math.radians(lat)
    cos_z = math.sin(phi) * math.sin(decl) + math.cos(phi) * math.cos(decl) * math.cos(hour_angle)
    return math.degrees(math.acos(min(1.0, max(-1.0, cos_z))))


def solar_zenith_for_step(lat: float, lon: float, step: int, calendar: SiteCalendar) -> float:
    """Zenith angle at a global quarter-hour step."""
    d = step // STEPS_PER_DAY
    clock = (step % STEPS_PER_DAY) * STEP_HOURS
    return solar_zenith_deg(lat, lon, clock, calendar.day_of_year(d))
