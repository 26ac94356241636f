"""Scenario trees: cross products of per-variable forecast variants.

Each predicted variable contributes its point forecast plus the interval
edges; assuming independence between variables, the tree takes the full cross
product with equal branch probabilities.  Branches that come out identical
(for example when the interval width is zero) are merged exactly, with their
probabilities summed, so a degenerate tree collapses to the deterministic one.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from ..grid import STEP_HOURS, STEPS_PER_DAY


@dataclass(frozen=True)
class ScenarioTree:
    """Per-branch forecast vectors over the receding window (96 steps in production)."""

    p_ev: np.ndarray         # (N_s, n_steps) kW
    p_pv: np.ndarray         # (N_s, n_steps) kW
    p_buy: np.ndarray        # (N_s, n_steps) price per kW per step
    p_sell: np.ndarray       # (N_s, n_steps)
    probabilities: np.ndarray

    def __post_init__(self) -> None:
        n = self.n_branches
        shape = self.p_ev.shape
        if shape[0] != n or shape[1] < 1:
            raise ValueError(f"branch array shape {shape} inconsistent with {n} branches")
        for arr in (self.p_pv, self.p_buy, self.p_sell):
            if arr.shape != shape:
                raise ValueError("branch arrays must share one shape")
        if abs(float(self.probabilities.sum()) - 1.0) > 1e-9:
            raise ValueError("branch probabilities must sum to 1")
        if np.any(self.p_ev < 0.0) or np.any(self.p_pv < 0.0):
            raise ValueError("EV and PV branch values must be nonnegative")

    @property
    def n_branches(self) -> int:
        return len(self.probabilities)

    @property
    def n_steps(self) -> int:
        return self.p_ev.shape[1]


def expand_price_window(price_hourly: np.ndarray, phase: int) -> np.ndarray:
    """Per-step buy prices for a 96-step window starting ``phase`` quarters into an hour.

    ``price_hourly`` covers the window's hours in order (24 values when the
    window is hour-aligned, 25 otherwise); each hourly price fills its quarter
    slots scaled by the step duration.
    """
    price_hourly = np.asarray(price_hourly, dtype=float)
    if not 0 <= phase <= 3:
        raise ValueError("phase must be 0..3")
    need = (phase + STEPS_PER_DAY + 3) // 4
    if len(price_hourly) < need:
        raise ValueError(f"need {need} hourly prices for phase {phase}, got {len(price_hourly)}")
    hour_idx = (phase + np.arange(STEPS_PER_DAY)) // 4
    return STEP_HOURS * price_hourly[hour_idx]


def build_scenario_tree(ev_variants, pv_variants, price_variants, phase: int = 0) -> ScenarioTree:
    """Cross product of forecast variants into an equally weighted tree.

    ``ev_variants`` and ``pv_variants`` are (n_s, 96) kW arrays; negative
    entries are clipped to zero.  ``price_variants`` is (n_s, n_hours) in the
    hourly price unit and is expanded to per-step buy prices, with the sell
    price set equal to the buy price.
    """
    ev = np.clip(np.atleast_2d(np.asarray(ev_variants, dtype=float)), 0.0, None)
    pv = np.clip(np.atleast_2d(np.asarray(pv_variants, dtype=float)), 0.0, None)
    pr = np.atleast_2d(np.asarray(price_variants, dtype=float))
    if ev.shape[1] != STEPS_PER_DAY or pv.shape[1] != STEPS_PER_DAY:
        raise ValueError("EV/PV variants must cover 96 steps")
    buy = np.stack([expand_price_window(row, phase) for row in pr])
    combos = list(product(range(len(ev)), range(len(pv)), range(len(pr))))
    n_s = len(combos)
    branches = {}
    order = []
    for a, b, c in combos:
        key = (ev[a].tobytes(), pv[b].tobytes(), buy[c].tobytes())
        if key in branches:
            branches[key][3] += 1
        else:
            branches[key] = [ev[a], pv[b], buy[c], 1]
            order.append(key)
    kept = [branches[k] for k in order]
    # integer counts divided once keep merged probabilities exact (27/27 == 1.0)
    return ScenarioTree(
        p_ev=np.stack([b[0] for b in kept]),
        p_pv=np.stack([b[1] for b in kept]),
        p_buy=np.stack([b[2] for b in kept]),
        p_sell=np.stack([b[2] for b in kept]),
        probabilities=np.array([b[3] for b in kept], dtype=float) / n_s,
    )
