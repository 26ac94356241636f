"""The dataset bundle: every series the pipeline consumes, on two grids.

Power, weather and carbon intensity live on the quarter-hour grid; day-ahead
price and the two exogenous national forecasts are hourly.  Weather and the
exogenous series are forecasts assumed available for the whole prediction
window; the EV/PV/price series are observations and must never be read at or
past the issuance step by any feature recipe.
"""

from __future__ import annotations

from dataclasses import dataclass, fields


from .grid import HOURS_PER_DAY, STEPS_PER_DAY, SiteCalendar, TimeSeries

QUARTER_SERIES = {
    "ev_power": "kW",
    "pv_power": "kW",
    "direct_radiation": "W/m2",
    "diffuse_radiation": "W/m2",
    "temperature": "degC",
    "wind_speed": "m/s",
    "carbon_intensity": "g/kWh",
}
HOURLY_SERIES = {
    "price_hourly": "EUR/MWh",
    "load_forecast_hourly": "MW",
    "gen_forecast_hourly": "MW",
}


@dataclass(frozen=True)
class DatasetBundle:
    ev_power: TimeSeries
    pv_power: TimeSeries
    price_hourly: TimeSeries
    load_forecast_hourly: TimeSeries
    gen_forecast_hourly: TimeSeries
    direct_radiation: TimeSeries
    diffuse_radiation: TimeSeries
    temperature: TimeSeries
    wind_speed: TimeSeries
    carbon_intensity: TimeSeries
    calendar: SiteCalendar

    def __post_init__(self) -> None:
        days = self.n_days
        if days < 1:
            raise ValueError("bundle must cover at least one full day")
        for name, unit in QUARTER_SERIES.items():
            s: TimeSeries = getattr(self, name)
            s.require_unit(unit)
            if s.start_step != 0 or len(s) < days * STEPS_PER_DAY:
                raise ValueError(f"{name} must cover steps [0, {days * STEPS_PER_DAY})")
        for name, unit in HOURLY_SERIES.items():
            s = getattr(self, name)
            s.require_unit(unit)
            if s.start_step != 0 or len(s) < days * HOURS_PER_DAY:
                raise ValueError(f"{name} must cover hours [0, {days * HOURS_PER_DAY})")

    @property
    def n_days(self) -> int:
        """Number of whole days jointly covered by all series."""
        q_days = min(len(getattr(self, n)) // STEPS_PER_DAY for n in QUARTER_SERIES)
        h_days = min(len(getattr(self, n)) // HOURS_PER_DAY for n in HOURLY_SERIES)
        return min(q_days, h_days)

    def replace_series(self, **series: TimeSeries) -> "DatasetBundle":
        """Copy of the bundle with some series swapped out (used in leakage tests)."""
        kwargs = {f.name: getattr(self, f.name) for f in fields(self)}
        kwargs.update(series)
        return DatasetBundle(**kwargs)
