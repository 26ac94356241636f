"""Closed-loop plant: applies committed actions to the exact hub model.

The plant uses the nonconvex relations (quadratic battery loss, kinked grid
cost), clamps requested powers to what the battery can physically deliver and
store over one step, and logs every clamp.  One episode is one day: the
battery starts at its initial energy, the controller re-plans at each of the
96 steps and only the first planned action is applied.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bundle import DatasetBundle
from .conic import ConicSolver
from .forecast.recipes import TargetModels, price_window_hours
from .grid import STEP_HOURS, STEPS_PER_DAY, Episode
from .hub import (
    BatteryParams,
    BatteryState,
    PricePair,
    exact_grid_cost,
    exact_internal_power,
    max_external_power,
    short_circuit_cap,
)
from .mpc import ControllerKind, MpcPlan, omniscient_tree, plan

log = logging.getLogger(__name__)

# requests within a micro-watt of the feasible range are boundary-riding solver
# output, not clamp events; they are still projected, just not logged
_CLAMP_EPS = 1e-6


@dataclass(frozen=True)
class PlantState:
    battery: BatteryState
    step_in_episode: int
    episode: Episode


@dataclass(frozen=True)
class StepRecord:
    """Everything observed while applying one committed action."""

    p_b_requested: float
    p_b_applied: float
    p_ib: float
    p_g: float
    e_b_after: float
    cost: float
    emissions_g: float
    clamped: bool


def apply(state: PlantState, p_b_star: float, p_ev: float, p_pv: float,
          prices: PricePair, carbon_intensity: float,
          battery: BatteryParams) -> tuple[PlantState, StepRecord]:
    """Apply an external battery power to the exact plant for one step.

    The request is clamped to the range deliverable under the loss model (real
    root existence) and storable within the energy box over one step; the
    internal power then follows from the exact quadratic loss relation.
    """
    e_b = state.battery.e_b
    p_sc = short_circuit_cap(e_b, battery)
    # internal power range allowed by the energy box over one step
    p_ib_hi = min((e_b - battery.e_min) / STEP_HOURS, 0.5 * p_sc)
    p_ib_lo = (e_b - battery.e_max) / STEP_HOURS
    p_b_hi = max_external_power(p_ib_hi, p_sc)
    p_b_lo = max_external_power(p_ib_lo, p_sc)
    p_b = min(max(p_b_star, p_b_lo), p_b_hi)
    clamped = abs(p_b - p_b_star) > _CLAMP_EPS
    if clamped:
        log.warning("plant clamped battery power %.6f kW to %.6f kW (E_b=%.3f kWh)",
                    p_b_star, p_b, e_b)
    p_ib = exact_internal_power(p_b, p_sc)
    e_b_next = e_b - STEP_HOURS * p_ib
    e_b_next = min(max(e_b_next, battery.e_min), battery.e_max)
    p_g = p_ev - p_pv - p_b
    cost = exact_grid_cost(p_g, prices)
    emissions = STEP_HOURS * p_g * carbon_intensity
    record = StepRecord(p_b_requested=p_b_star, p_b_applied=p_b, p_ib=p_ib, p_g=p_g,
                        e_b_after=e_b_next, cost=cost, emissions_g=emissions,
                        clamped=clamped)
    next_state = PlantState(battery=BatteryState(e_b=e_b_next),
                            step_in_episode=state.step_in_episode + 1,
                            episode=state.episode)
    return next_state, record


@dataclass
class EpisodeResult:
    """Trajectories and diagnostics of one 96-step closed-loop day."""

    kind: str
    day: int
    p_b: np.ndarray
    p_ib: np.ndarray
    p_g: np.ndarray
    e_b: np.ndarray
    cost: np.ndarray
    emissions_g: np.ndarray
    p_ev: np.ndarray
    p_pv: np.ndarray
    price_per_kw_step: np.ndarray
    solve_seconds: np.ndarray
    step_seconds: np.ndarray
    cone_residuals: np.ndarray      # committed-step relaxation residual per step
    epigraph_gaps: np.ndarray
    coupling_spreads: np.ndarray
    periodicity_gaps: np.ndarray
    fallback_count: int = 0
    clamp_count: int = 0

    def __post_init__(self) -> None:
        for name in ("p_b", "p_ib", "p_g", "e_b", "cost", "emissions_g"):
            if len(getattr(self, name)) != STEPS_PER_DAY:
                raise ValueError(f"{name} trajectory must have {STEPS_PER_DAY} entries")

    @property
    def total_cost(self) -> float:
        return float(self.cost.sum())

    @property
    def total_emissions_g(self) -> float:
        return float(self.emissions_g.sum())

    @property
    def runtime_seconds(self) -> float:
        return float(self.step_seconds.sum())

    def summary(self) -> dict:
        return {
            "controller": self.kind,
            "day": self.day,
            "total_cost": self.total_cost,
            "total_emissions_g": self.total_emissions_g,
            "runtime_seconds": self.runtime_seconds,
            "solver_seconds": float(self.solve_seconds.sum()),
            "fallback_count": self.fallback_count,
            "clamp_count": self.clamp_count,
            "max_cone_residual": float(np.max(np.abs(self.cone_residuals))),
            "max_epigraph_gap": float(np.max(np.abs(self.epigraph_gaps))),
            "max_coupling_spread": float(np.max(self.coupling_spreads)),
            "max_periodicity_gap": float(np.max(self.periodicity_gaps)),
            "final_e_b": float(self.e_b[-1]),
        }


def _tree_for_step(kind: ControllerKind, bundle: DatasetBundle, k: int,
                   models: TargetModels | None):
    if kind is ControllerKind.OMNISCIENT:
        h0, n_hours = price_window_hours(k)
        return omniscient_tree(
            bundle.ev_power.window(k, k + STEPS_PER_DAY),
            bundle.pv_power.window(k, k + STEPS_PER_DAY),
            bundle.price_hourly.window(h0, h0 + n_hours),
            phase=k % 4,
        )
    if models is None:
        raise ValueError(f"{kind.value} controller needs trained forecast models")
    stochastic = kind in (ControllerKind.STOCHASTIC, ControllerKind.RECOURSE)
    return models.scenario_tree(bundle, k, stochastic=stochastic)


def run_episode(kind: ControllerKind, day: int, bundle: DatasetBundle,
                battery: BatteryParams, solver: ConicSolver,
                models: TargetModels | None = None) -> EpisodeResult:
    """Run one closed-loop day: forecast, plan, commit, apply, repeat."""
    episode = Episode(day_index=day)
    if (day + 1) * STEPS_PER_DAY + STEPS_PER_DAY > bundle.n_days * STEPS_PER_DAY:
        raise ValueError(f"day {day} needs data one day past the episode end")
    state = PlantState(battery=BatteryState(e_b=battery.e_init),
                       step_in_episode=0, episode=episode)
    n = STEPS_PER_DAY
    arrays = {name: np.zeros(n) for name in
              ("p_b", "p_ib", "p_g", "e_b", "cost", "emissions_g", "p_ev", "p_pv",
               "price_per_kw_step", "solve_seconds", "step_seconds", "cone_residuals",
               "epigraph_gaps", "coupling_spreads", "periodicity_gaps")}
    fallbacks = 0
    clamps = 0
    for i in range(n):
        k = episode.first_step + i
        t0 = time.perf_counter()
        tree = _tree_for_step(kind, bundle, k, models)
        mpc_plan: MpcPlan = plan(kind, tree, state.battery, i, solver, battery)
        step_seconds = time.perf_counter() - t0
        price = STEP_HOURS * bundle.price_hourly.at(k // 4)
        prices = PricePair(buy=price, sell=price)
        state, rec = apply(state, mpc_plan.committed_p_b,
                           bundle.ev_power.at(k), bundle.pv_power.at(k), prices,
                           bundle.carbon_intensity.at(k), battery)
        arrays["p_b"][i] = rec.p_b_applied
        arrays["p_ib"][i] = rec.p_ib
        arrays["p_g"][i] = rec.p_g
        arrays["e_b"][i] = rec.e_b_after
        arrays["cost"][i] = rec.cost
        arrays["emissions_g"][i] = rec.emissions_g
        arrays["p_ev"][i] = bundle.ev_power.at(k)
        arrays["p_pv"][i] = bundle.pv_power.at(k)
        arrays["price_per_kw_step"][i] = price
        arrays["solve_seconds"][i] = (mpc_plan.solution.solve_seconds
                                      if mpc_plan.solution is not None else 0.0)
        arrays["step_seconds"][i] = step_seconds
        arrays["cone_residuals"][i] = mpc_plan.committed_cone_residual
        arrays["epigraph_gaps"][i] = mpc_plan.committed_epigraph_gap
        arrays["coupling_spreads"][i] = mpc_plan.coupling_spread
        arrays["periodicity_gaps"][i] = mpc_plan.periodicity_gap
        fallbacks += int(mpc_plan.fallback)
        clamps += int(rec.clamped)
    return EpisodeResult(kind=kind.value, day=day, fallback_count=fallbacks,
                         clamp_count=clamps, **arrays)


def _episode_worker(args) -> EpisodeResult:
    kind, day, bundle, battery, tol, models = args
    return run_episode(kind, day, bundle, battery, ConicSolver(tol=tol), models)


def run_days(kind: ControllerKind, days, bundle: DatasetBundle, battery: BatteryParams,
             models: TargetModels | None = None, tol: float = 1e-6,
             workers: int = 1) -> list[EpisodeResult]:
    """Run several episodes, optionally fanned out across processes.

    Episodes are independent (the battery resets each day), so ordering of the
    returned list follows ``days`` regardless of worker count.
    """
    days = list(days)
    if workers <= 1 or len(days) <= 1:
        solver = ConicSolver(tol=tol)
        return [run_episode(kind, d, bundle, battery, solver, models) for d in days]
    jobs = [(kind, d, bundle, battery, tol, models) for d in days]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_episode_worker, jobs))
