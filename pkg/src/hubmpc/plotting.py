"""Figure rendering for the report path (PNG files next to the CSV output).

All figures draw from the plain plot-data frames emitted by the metrics
module, so external tooling can reproduce them from the CSVs alone.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

plt.rcParams.update({
    "figure.figsize": (8.0, 4.5),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.labelsize": 9,
    "font.size": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
})

TARGET_LABELS = {
    "ev": ("EV charging power", "kW"),
    "pv": ("PV generation", "kW"),
    "price": ("Day-ahead price", "EUR/MWh"),
}


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def forecast_band_figure(frame: pd.DataFrame, target: str, path: str | Path,
                         title: str = "") -> Path:
    """Observed series, point forecast and interval band, with the absolute error below."""
    label, unit = TARGET_LABELS.get(target, (target, ""))
    fig, (ax, ax_err) = plt.subplots(
        2, 1, sharex=True, gridspec_kw={"height_ratios": [3, 1]}, figsize=(8, 5))
    x = frame["step"]
    ax.fill_between(x, frame["lower"], frame["upper"], alpha=0.25, lw=0,
                    label="interval (p5-p95)")
    ax.plot(x, frame["predicted"], lw=1.2, label="predicted")
    ax.plot(x, frame["observed"], lw=1.0, color="k", label="observed")
    ax.set_ylabel(f"{label} [{unit}]")
    ax.legend(loc="upper right")
    if title:
        ax.set_title(title)
    ax_err.plot(x, frame["abs_error"], lw=0.9, color="firebrick")
    ax_err.set_ylabel(f"|error| [{unit}]")
    ax_err.set_xlabel("window step")
    return _save(fig, path)


def operation_trace_figure(frame: pd.DataFrame, path: str | Path,
                           title: str = "") -> Path:
    """One day of hub operation: residual load and dispatch, stored energy, price."""
    fig, (ax_p, ax_e, ax_pr) = plt.subplots(
        3, 1, sharex=True, figsize=(8, 7), gridspec_kw={"height_ratios": [3, 2, 1]})
    x = frame["step"]
    ax_p.plot(x, frame["residual_load"], color="k", lw=1.1, label="residual load")
    ax_p.plot(x, frame["p_g"], lw=1.0, label="grid power")
    ax_p.plot(x, frame["p_b"], lw=1.0, label="battery power")
    ax_p.axhline(0.0, color="gray", lw=0.6)
    ax_p.set_ylabel("power [kW]")
    ax_p.legend(loc="upper right", ncol=3)
    if title:
        ax_p.set_title(title)
    ax_e.plot(x, frame["e_b"], color="seagreen", lw=1.2)
    ax_e.set_ylabel("stored energy [kWh]")
    ax_pr.step(x, frame["price_per_kw_step"], where="post", color="slateblue", lw=1.0)
    ax_pr.set_ylabel("price\n[per kW step]")
    ax_pr.set_xlabel("episode step")
    return _save(fig, path)


def normalized_cost_figure(table: pd.DataFrame, path: str | Path,
                           ylabel: str = "normalized daily cost [%]") -> Path:
    """Grouped bars of the per-season normalized controller comparison."""
    fig, ax = plt.subplots(figsize=(8, 4))
    seasons = list(table.index)
    controllers = list(table.columns)
    width = 0.8 / len(controllers)
    x = np.arange(len(seasons))
    for i, c in enumerate(controllers):
        ax.bar(x + i * width, table[c].to_numpy(), width=width, label=c)
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels(seasons)
    ax.set_ylabel(ylabel)
    lo = min(95.0, float(np.nanmin(table.to_numpy())) - 2.0)
    hi = float(np.nanmax(table.to_numpy())) + 2.0
    ax.set_ylim(lo, hi)
    ax.legend(ncol=len(controllers), loc="upper left")
    return _save(fig, path)
