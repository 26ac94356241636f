"""Quarter-hour time grid, unit-tagged series containers and episode bookkeeping.

All signals in the pipeline live on one global step grid: step 0 is the first
timestamp of the dataset, each step lasts ``STEP_HOURS`` hours and a day is
exactly ``STEPS_PER_DAY`` steps.  Lags and windows are pure index arithmetic;
there is no timezone or DST handling anywhere.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field

import numpy as np

STEP_HOURS = 0.25
STEPS_PER_DAY = 96
STEPS_PER_HOUR = 4
HOURS_PER_DAY = 24

# sanity: the grid constants must tile a day exactly
assert STEP_HOURS * STEPS_PER_DAY == 24.0
assert STEPS_PER_HOUR * STEP_HOURS == 1.0


@dataclass(frozen=True)
class TimeGrid:
    """Resolution constants of the discretized day."""

    step_duration_hours: float = STEP_HOURS
    steps_per_day: int = STEPS_PER_DAY
    steps_per_hour: int = STEPS_PER_HOUR

    def __post_init__(self) -> None:
        if self.step_duration_hours * self.steps_per_day != 24.0:
            raise ValueError("grid does not tile a 24 h day")
        if self.steps_per_hour * self.step_duration_hours != 1.0:
            raise ValueError("grid does not tile one hour")


def day_window(d: int) -> range:
    """Step indices of day ``d``: {k | 96*d <= k < 96*(d+1)}."""
    if d < 0:
        raise ValueError(f"day index must be >= 0, got {d}")
    return range(STEPS_PER_DAY * d, STEPS_PER_DAY * (d + 1))


@dataclass(frozen=True)
class TimeSeries:
    """Gap-free scalar series anchored at a global step index.

    ``values`` is stored as a read-only float array; the unit tag is fixed at
    construction and checked (string equality) wherever series cross module
    boundaries.
    """

    start_step: int
    values: np.ndarray
    unit: str

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 1:
            raise ValueError("TimeSeries values must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("TimeSeries values must be finite (gap-free)")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end_step(self) -> int:
        """One past the last covered step."""
        return self.start_step + len(self.values)

    def covers(self, first: int, last_exclusive: int) -> bool:
        return self.start_step <= first and last_exclusive <= self.end_step

    def at(self, step: int) -> float:
        if not self.covers(step, step + 1):
            raise IndexError(f"step {step} outside [{self.start_step}, {self.end_step})")
        return float(self.values[step - self.start_step])

    def window(self, first: int, last_exclusive: int) -> np.ndarray:
        """Values on [first, last_exclusive) as a fresh array."""
        if not self.covers(first, last_exclusive):
            raise IndexError(
                f"window [{first}, {last_exclusive}) outside covered range "
                f"[{self.start_step}, {self.end_step})"
            )
        lo = first - self.start_step
        return np.array(self.values[lo : lo + (last_exclusive - first)])

    def day(self, d: int) -> np.ndarray:
        w = day_window(d)
        return self.window(w.start, w.stop)

    def require_unit(self, unit: str) -> "TimeSeries":
        if self.unit != unit:
            raise ValueError(f"expected series in {unit!r}, got {self.unit!r}")
        return self


@dataclass(frozen=True)
class Episode:
    """One daily evaluation episode: 96 steps starting at midnight of day ``d``."""

    day_index: int
    length: int = STEPS_PER_DAY

    def __post_init__(self) -> None:
        if self.day_index < 0:
            raise ValueError("day index must be >= 0")

    @property
    def first_step(self) -> int:
        return STEPS_PER_DAY * self.day_index

    @property
    def steps(self) -> range:
        return range(self.first_step, self.first_step + self.length)


def hour_to_quarter_expand(hourly: np.ndarray) -> np.ndarray:
    """Expand 24 hourly prices to 96 quarter-hour per-step prices.

    Each hourly value is replicated into its four quarter slots and scaled by
    the step duration, so a price per unit energy becomes a price per unit
    power per step.
    """
    arr = np.asarray(hourly, dtype=float)
    if arr.shape != (HOURS_PER_DAY,):
        raise ValueError(f"expected exactly {HOURS_PER_DAY} hourly values, got shape {arr.shape}")
    return STEP_HOURS * np.repeat(arr, STEPS_PER_HOUR)


_SEASONS = {
    12: "Winter", 1: "Winter", 2: "Winter",
    3: "Spring", 4: "Spring", 5: "Spring",
    6: "Summer", 7: "Summer", 8: "Summer",
    9: "Autumn", 10: "Autumn", 11: "Autumn",
}


@dataclass(frozen=True)
class SiteCalendar:
    """Maps day indices to calendar dates; step 0 is midnight of ``start_date``."""

    start_date: _dt.date = field(default_factory=lambda: _dt.date(2020, 1, 6))

    def date_of(self, d: int) -> _dt.date:
        return self.start_date + _dt.timedelta(days=int(d))

    def month_of(self, d: int) -> int:
        return self.date_of(d).month

    def weekday_of(self, d: int) -> int:
        """Monday = 0 ... Sunday = 6."""
        return self.date_of(d).weekday()

    def season_of(self, d: int) -> str:
        """Meteorological season (Dec-Feb winter, etc.)."""
        return _SEASONS[self.month_of(d)]

    def day_of_year(self, d: int) -> int:
        return self.date_of(d).timetuple().tm_yday


def hour_of_day(step: int) -> float:
    """Clock hour of a global step (0.0, 0.25, ..., 23.75)."""
    return (step % STEPS_PER_DAY) * STEP_HOURS


def day_of(step: int) -> int:
    return step // STEPS_PER_DAY
