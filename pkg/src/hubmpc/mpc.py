"""Controller variants: compile a scenario tree into a cone program and commit an action.

Per scenario and window step the program carries six variables (internal and
external battery power, grid power, stored energy, short-circuit power, cost
epigraph).  Scenario coupling is written as explicit equality rows tying each
scenario's internal battery power to scenario 0 on the coupled steps: every
step for the Stochastic variant, only the first step for Recourse.  The
battery must return to the episode's initial energy at the window index where
the current episode ends; window steps beyond that index stay constrained by
the energy box only.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from .conic import OPTIMAL, ConicProgram, ConicSolver, ProgramBuilder, Solution
from .forecast.scenarios import ScenarioTree, build_scenario_tree
from .grid import STEP_HOURS
from .hub import BatteryParams, BatteryState, max_external_power, short_circuit_cap

log = logging.getLogger(__name__)

VARS_PER_STEP = 6
PIB, PB, PG, EB, PSC, CEL = range(VARS_PER_STEP)


class ControllerKind(enum.Enum):
    OMNISCIENT = "omniscient"
    DETERMINISTIC = "deterministic"
    STOCHASTIC = "stochastic"
    RECOURSE = "recourse"

    @property
    def single_branch(self) -> bool:
        return self in (ControllerKind.OMNISCIENT, ControllerKind.DETERMINISTIC)

    def coupled_steps(self, n_window: int) -> range:
        """Window steps on which the control must agree across scenarios."""
        if self is ControllerKind.RECOURSE:
            return range(1)
        return range(n_window)


def _var_ids(n_scenarios: int, n_window: int, which: int) -> np.ndarray:
    base = (np.arange(n_scenarios)[:, None] * n_window + np.arange(n_window)[None, :])
    return base * VARS_PER_STEP + which


def assemble_problem(tree: ScenarioTree, state: BatteryState, kind: ControllerKind,
                     k_in_episode: int, battery: BatteryParams) -> ConicProgram:
    """Compile one receding-horizon instance into a :class:`ConicProgram`.

    The episode length equals the tree's window length (96 in production), so
    the periodicity row lands at window index ``n - k_in_episode``.
    """
    if kind.single_branch and tree.n_branches != 1:
        raise ValueError(f"{kind.value} controller requires a single-branch tree, "
                         f"got {tree.n_branches}")
    S, n = tree.n_branches, tree.n_steps
    if not 0 <= k_in_episode < n:
        raise ValueError(f"k_in_episode must lie in [0, {n})")
    if not battery.e_min <= state.e_b <= battery.e_max:
        raise ValueError(f"anchor energy {state.e_b} outside battery limits")
    dT = STEP_HOURS
    n_vars = S * n * VARS_PER_STEP
    pb = ProgramBuilder(n_vars)
    pib, pbv = _var_ids(S, n, PIB), _var_ids(S, n, PB)
    pg, eb = _var_ids(S, n, PG), _var_ids(S, n, EB)
    psc, cel = _var_ids(S, n, PSC), _var_ids(S, n, CEL)

    # objective: probability-weighted cost epigraph terms
    pb.add_objective(cel, np.broadcast_to(tree.probabilities[:, None], (S, n)))

    # power balance per (s, i): P_g + P_b = P_ev - P_pv
    pb.eq.add(np.stack([pg, pbv], axis=-1).reshape(-1, 2), [[1.0, 1.0]],
              (tree.p_ev - tree.p_pv).reshape(-1))
    # dynamics anchored at the measured state
    pb.eq.add(eb[:, :1], [[1.0]], np.full(S, state.e_b))
    if n > 1:
        pb.eq.add(np.stack([eb[:, 1:], eb[:, :-1], pib[:, :-1]], axis=-1).reshape(-1, 3),
                  [[1.0, -1.0, dT]], np.zeros(S * (n - 1)))
    # episode-end periodicity: stored energy returns to the episode start value
    i_end = n - k_in_episode
    if i_end < n:
        pb.eq.add(eb[:, i_end : i_end + 1], [[1.0]], np.full(S, battery.e_init))
    else:
        pb.eq.add(np.stack([eb[:, -1], pib[:, -1]], axis=-1).reshape(-1, 2),
                  [[1.0, -dT]], np.full(S, battery.e_init))
    # scenario coupling on the control variable
    coupled = kind.coupled_steps(n)
    if S > 1 and len(coupled) > 0:
        own = pib[1:, coupled.start : coupled.stop].reshape(-1, 1)
        ref = np.broadcast_to(pib[0, coupled.start : coupled.stop], (S - 1, len(coupled)))
        pb.eq.add(np.concatenate([own, ref.reshape(-1, 1)], axis=1), [[1.0, -1.0]],
                  np.zeros(len(own)))

    # piecewise short-circuit cap
    for a_m, b_m in battery.splines:
        pb.ineq.add(np.stack([psc, eb], axis=-1).reshape(-1, 2), [[1.0, -a_m]],
                    np.full(S * n, b_m))
    # cost epigraph (buy >= sell keeps this a lossless relaxation)
    pg_cel = np.stack([cel, pg], axis=-1).reshape(-1, 2)
    pb.ineq.add(pg_cel, np.stack([np.full(S * n, -1.0),
                                  tree.p_buy.reshape(-1)], axis=-1),
                np.zeros(S * n))
    pb.ineq.add(pg_cel, np.stack([np.full(S * n, -1.0),
                                  tree.p_sell.reshape(-1)], axis=-1),
                np.zeros(S * n))
    # battery energy after the final window step stays inside the box
    end_cols = np.stack([eb[:, -1], pib[:, -1]], axis=-1).reshape(-1, 2)
    pb.ineq.add(end_cols, [[1.0, -dT]], np.full(S, battery.e_max))
    pb.ineq.add(end_cols, [[-1.0, dT]], np.full(S, -battery.e_min))

    # box bounds
    pb.set_bounds(eb.reshape(-1), battery.e_min, battery.e_max)
    pb.set_bounds(pib.reshape(-1), -battery.p_ib_bound, battery.p_ib_bound)
    pb.set_bounds(psc.reshape(-1), 0.0, None)
    if min(tree.p_buy.min(), tree.p_sell.min()) <= 0.0:
        # with a nonpositive price the cone admits unlimited loss-burning, so
        # the physical external-power range must be imposed explicitly
        pb_lo, pb_hi = battery.external_power_bounds()
        pb.set_bounds(pbv.reshape(-1), pb_lo, pb_hi)

    # cone blocks per (s, i): t = P_ib - P_b + P_sc, v = (2 P_ib, P_ib - P_b - P_sc)
    trip = np.stack([pib, pbv, psc], axis=-1).reshape(-1, 1, 3)
    cols = np.broadcast_to(trip, (S * n, 3, 3)).reshape(-1, 3)
    coefs = np.broadcast_to(
        np.array([[1.0, -1.0, 1.0], [2.0, 0.0, 0.0], [1.0, -1.0, -1.0]]),
        (S * n, 3, 3)).reshape(-1, 3)
    pb.add_soc_rows(cols, coefs, np.zeros(3 * S * n), dim=3, n_blocks=S * n)
    return pb.build()


@dataclass(frozen=True)
class MpcPlan:
    """Solved trajectories plus the committed first-step action."""

    kind: ControllerKind
    p_ib: np.ndarray       # (S, n_steps)
    p_b: np.ndarray
    p_g: np.ndarray
    e_b: np.ndarray
    p_sc: np.ndarray
    c_el: np.ndarray
    committed_p_ib: float
    committed_p_b: float
    objective_value: float
    solution: Solution | None
    fallback: bool
    coupling_spread: float     # max |P_ib[s,i] - P_ib[0,i]| over coupled steps
    periodicity_gap: float     # max_s |E_b at episode end - e_init|
    committed_cone_residual: float
    committed_epigraph_gap: float


def _plan_from_solution(kind: ControllerKind, tree: ScenarioTree, state: BatteryState,
                        k_in_episode: int, battery: BatteryParams,
                        sol: Solution) -> MpcPlan:
    S, n = tree.n_branches, tree.n_steps
    x = sol.primal.reshape(S, n, VARS_PER_STEP)
    p_ib, p_b, p_g = x[:, :, PIB], x[:, :, PB], x[:, :, PG]
    e_b, p_sc, c_el = x[:, :, EB], x[:, :, PSC], x[:, :, CEL]
    committed_p_ib = float(p_ib[0, 0])
    cap0 = short_circuit_cap(state.e_b, battery)
    committed_p_b = max_external_power(committed_p_ib, cap0)
    coupled = kind.coupled_steps(n)
    spread = 0.0
    if S > 1:
        block = p_ib[:, coupled.start : coupled.stop]
        spread = float(np.max(np.abs(block - block[0:1])))
    i_end = n - k_in_episode
    if i_end < n:
        end_e = e_b[:, i_end]
    else:
        end_e = e_b[:, -1] - STEP_HOURS * p_ib[:, -1]
    periodicity_gap = float(np.max(np.abs(end_e - battery.e_init)))
    # relaxation diagnostics at the committed step, worst case over scenarios
    t = p_ib[:, 0] - p_b[:, 0] + p_sc[:, 0]
    v = np.hypot(2.0 * p_ib[:, 0], p_ib[:, 0] - p_b[:, 0] - p_sc[:, 0])
    cone_resid = float(np.max(t - v))
    epi_gap = float(np.max(c_el[:, 0] - np.maximum(tree.p_buy[:, 0] * p_g[:, 0],
                                                   tree.p_sell[:, 0] * p_g[:, 0])))
    return MpcPlan(kind=kind, p_ib=p_ib, p_b=p_b, p_g=p_g, e_b=e_b, p_sc=p_sc,
                   c_el=c_el, committed_p_ib=committed_p_ib, committed_p_b=committed_p_b,
                   objective_value=sol.objective_value, solution=sol, fallback=False,
                   coupling_spread=spread, periodicity_gap=periodicity_gap,
                   committed_cone_residual=cone_resid, committed_epigraph_gap=epi_gap)


def _fallback_plan(kind: ControllerKind, tree: ScenarioTree,
                   sol: Solution | None) -> MpcPlan:
    S = tree.n_branches
    zeros = np.zeros((S, tree.n_steps))
    return MpcPlan(kind=kind, p_ib=zeros, p_b=zeros.copy(), p_g=zeros.copy(),
                   e_b=zeros.copy(), p_sc=zeros.copy(), c_el=zeros.copy(),
                   committed_p_ib=0.0, committed_p_b=0.0,
                   objective_value=float("nan"), solution=sol, fallback=True,
                   coupling_spread=0.0, periodicity_gap=0.0,
                   committed_cone_residual=0.0, committed_epigraph_gap=0.0)


def plan(kind: ControllerKind, tree: ScenarioTree, state: BatteryState,
         k_in_episode: int, solver: ConicSolver, battery: BatteryParams) -> MpcPlan:
    """Solve the receding-horizon program and extract the committed action.

    The committed external power follows from the committed internal power
    through the loss relation at the anchor state's short-circuit cap, so the
    plant reproduces the plan exactly wherever the relaxation is tight.  An
    unsolved program falls back to a zero action and flags it.
    """
    program = assemble_problem(tree, state, kind, k_in_episode, battery)
    sol = solver.solve(program)
    if sol.status != OPTIMAL:
        log.warning("%s MPC solve returned %s at episode step %d; committing zero action",
                    kind.value, sol.status, k_in_episode)
        return _fallback_plan(kind, tree, sol)
    return _plan_from_solution(kind, tree, state, k_in_episode, battery, sol)


def omniscient_tree(p_ev: np.ndarray, p_pv: np.ndarray, price_hourly: np.ndarray,
                    phase: int = 0) -> ScenarioTree:
    """Single-branch tree carrying realized values (the perfect-forecast benchmark)."""
    return build_scenario_tree([p_ev], [p_pv], [price_hourly], phase=phase)
