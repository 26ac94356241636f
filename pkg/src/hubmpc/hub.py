"""Physical and economic model of the charging hub.

Contains both the exact plant-side relations (quadratic battery loss, kinked
grid cost) and the ingredients the controller relaxes (second-order cone row,
piecewise short-circuit cap, cost epigraph).  Sign convention: positive
battery power means discharging into the hub, so positive internal power
drains the stored energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .grid import STEP_HOURS, TimeSeries

# Synthetic two-spline short-circuit fit used when no measured fit is supplied.
DEFAULT_SPLINES = ((1.5, 25.0), (0.5, 80.0))


class InfeasiblePowerError(ValueError):
    """Requested external battery power exceeds what the loss model can deliver."""


@dataclass(frozen=True)
class BatteryParams:
    """Static battery limits and the piecewise-affine short-circuit fit."""

    e_min: float = 10.0
    e_max: float = 90.0
    e_init: float = 25.0
    splines: tuple[tuple[float, float], ...] = DEFAULT_SPLINES
    p_ib_bound: float | None = None

    def __post_init__(self) -> None:
        if not (self.e_min < self.e_init < self.e_max):
            raise ValueError(
                f"need e_min < e_init < e_max, got {self.e_min}, {self.e_init}, {self.e_max}"
            )
        if len(self.splines) == 0:
            raise ValueError("at least one short-circuit spline is required")
        lo = short_circuit_cap(self.e_min, self)
        hi = short_circuit_cap(self.e_max, self)
        if min(lo, hi) <= 0.0:
            # the envelope is concave, so positivity at both ends covers the interval
            raise ValueError("short-circuit envelope must be positive on [e_min, e_max]")
        if self.p_ib_bound is None:
            object.__setattr__(self, "p_ib_bound", self.peak_short_circuit_cap())
        elif self.p_ib_bound <= 0.0:
            raise ValueError("p_ib_bound must be positive")

    def peak_short_circuit_cap(self) -> float:
        """Largest cap value over [e_min, e_max] (exact: concave envelope)."""
        candidates = [self.e_min, self.e_max]
        sp = self.splines
        for i in range(len(sp)):
            for j in range(i + 1, len(sp)):
                (ai, bi), (aj, bj) = sp[i], sp[j]
                if ai != aj:
                    e = (bj - bi) / (ai - aj)
                    if self.e_min < e < self.e_max:
                        candidates.append(e)
        return max(short_circuit_cap(e, self) for e in candidates)

    def min_short_circuit_cap(self) -> float:
        """Smallest cap value over [e_min, e_max] (endpoints of a concave envelope)."""
        return min(short_circuit_cap(self.e_min, self),
                   short_circuit_cap(self.e_max, self))

    def external_power_bounds(self) -> tuple[float, float]:
        """Range of external power reachable under the loss model.

        The cone relaxation alone leaves P_b unbounded below (extra loss is
        feasible), which makes programs with negative prices unbounded; this
        box restores the physical range without ever cutting the loss
        manifold: discharge tops out at P_sc/4, charge at the internal-power
        bound evaluated at the weakest short-circuit cap.
        """
        b = self.p_ib_bound
        psc_min = self.min_short_circuit_cap()
        return (-b - b * b / psc_min, min(b, self.peak_short_circuit_cap() / 4.0))


@dataclass(frozen=True)
class BatteryState:
    """Current stored energy in kWh."""

    e_b: float


@dataclass(frozen=True)
class EvSession:
    """One charging session: energy delivered between arrival and departure steps."""

    arrival_step: int
    departure_step: int
    energy_kwh: float

    def __post_init__(self) -> None:
        if self.departure_step <= self.arrival_step:
            raise ValueError("departure must be after arrival")
        if self.energy_kwh < 0.0:
            raise ValueError("session energy must be nonnegative")


@dataclass(frozen=True)
class PricePair:
    """Buy/sell grid prices per kW per step; buy >= sell keeps the cost relaxation lossless."""

    buy: float
    sell: float

    def __post_init__(self) -> None:
        if self.buy < self.sell:
            raise ValueError(f"buy price {self.buy} below sell price {self.sell}")


def session_avg_power(s: EvSession) -> float:
    """Average charging power of a session in kW."""
    return s.energy_kwh / (STEP_HOURS * (s.departure_step - s.arrival_step))


def aggregate_ev_demand(sessions: Iterable[EvSession], k_range: range) -> TimeSeries:
    """Total EV power on ``k_range``: superposition of per-session average profiles.

    A session contributes on the closed step interval [arrival, departure].
    """
    out = np.zeros(len(k_range))
    k0 = k_range.start
    for s in sessions:
        p = session_avg_power(s)
        lo = max(s.arrival_step, k_range.start)
        hi = min(s.departure_step, k_range.stop - 1)
        if hi >= lo:
            out[lo - k0 : hi - k0 + 1] += p
    return TimeSeries(start_step=k0, values=out, unit="kW")


def short_circuit_cap(e_b: float, params: BatteryParams) -> float:
    """Tightest admissible short-circuit power at stored energy ``e_b``."""
    if not (params.e_min <= e_b <= params.e_max):
        raise ValueError(f"e_b={e_b} outside [{params.e_min}, {params.e_max}]")
    return min(a * e_b + b for a, b in params.splines)


def exact_internal_power(p_b: float, p_sc: float) -> float:
    """Internal battery power solving the quadratic loss balance.

    Picks the root of ``p_ib**2 / p_sc - p_ib + p_b = 0`` closest to ``p_b``
    (the physical low-loss branch).  Requires ``p_b <= p_sc / 4`` for a real
    root; callers clamp before asking.
    """
    if p_sc <= 0.0:
        raise ValueError(f"short-circuit power must be positive, got {p_sc}")
    ratio = 4.0 * p_b / p_sc
    if ratio > 1.0 + 1e-12:
        raise InfeasiblePowerError(
            f"p_b={p_b} exceeds deliverable maximum p_sc/4={p_sc / 4.0}"
        )
    return 0.5 * p_sc * (1.0 - math.sqrt(max(0.0, 1.0 - ratio)))


def max_external_power(p_ib: float, p_sc: float) -> float:
    """External power delivered at internal power ``p_ib`` (loss equation rearranged)."""
    return p_ib - p_ib * p_ib / p_sc


def cone_row(p_ib: float, p_b: float, p_sc: float) -> float:
    """Residual of the second-order cone relaxation of the loss equation.

    Nonnegative iff the cone constraint holds; zero iff the quadratic loss
    equation holds with equality.
    """
    lhs = p_ib - p_b + p_sc
    rhs = math.hypot(2.0 * p_ib, p_ib - p_b - p_sc)
    return lhs - rhs


def step_battery(state: BatteryState, p_ib: float) -> BatteryState:
    """Advance stored energy one step under internal power ``p_ib``."""
    return BatteryState(e_b=state.e_b - STEP_HOURS * p_ib)


def exact_grid_cost(p_g: float, prices: PricePair) -> float:
    """Cost of one step of grid exchange (negative = revenue)."""
    return prices.buy * p_g if p_g >= 0.0 else prices.sell * p_g


def epigraph_gap(c_el: float, p_g: float, prices: PricePair) -> float:
    """Distance of ``c_el`` above the kinked cost; zero when the epigraph is tight."""
    return c_el - max(prices.buy * p_g, prices.sell * p_g)


def power_balance_residual(p_ev: float, p_g: float, p_pv: float, p_b: float) -> float:
    """Hub power balance residual; zero iff demand equals supply."""
    return p_ev - p_g - p_pv - p_b
