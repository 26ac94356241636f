"""Command-line surface: validate, synth-data, train, eval-forecasts, simulate, report."""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np
import pandas as pd

from . import dataio, metrics, plotting
from .forecast.recipes import load_models, save_models, train_models
from .mpc import ControllerKind
from .simenv import run_days


def _setup_logging() -> None:
    level = os.environ.get("HUBMPC_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _fail(exc: BaseException) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload), file=sys.stderr)
    sys.exit(1)


def _load_and_check(config_path: str) -> dataio.RunConfig:
    cfg = dataio.load_config(config_path)
    problems = dataio.validate_config(cfg)
    if problems:
        raise ValueError("; ".join(problems))
    return cfg


def _models_path(cfg: dataio.RunConfig) -> Path:
    return cfg.output_dir / "models" / "forecasters.npz"


@click.group()
def main() -> None:
    """Battery-buffered EV charging hub: forecasting, scenario MPC and evaluation."""
    _setup_logging()


@main.command()
@click.argument("config", type=click.Path(exists=True))
def validate(config: str) -> None:
    """Check the configuration schema, invariants and referenced files."""
    try:
        cfg = dataio.load_config(config)
    except Exception as exc:
        _fail(exc)
    problems = dataio.validate_config(cfg)
    if problems:
        _fail(ValueError("; ".join(problems)))
    click.echo("configuration ok")


@main.command("synth-data")
@click.argument("config", type=click.Path(exists=True))
def synth_data(config: str) -> None:
    """Materialize the configured synthetic dataset as CSV files."""
    try:
        cfg = _load_and_check(config)
        bundle = dataio.load_bundle(cfg)
        paths = dataio.serialize_bundle(bundle, cfg.output_dir / "data")
    except Exception as exc:
        _fail(exc)
    for name, p in sorted(paths.items()):
        click.echo(f"wrote {name}: {p}")


@main.command()
@click.argument("config", type=click.Path(exists=True))
def train(config: str) -> None:
    """Fit the three conformal forecasters and store the model artifact."""
    try:
        cfg = _load_and_check(config)
        bundle = dataio.load_bundle(cfg)
        boundary = dataio.boundary_day(cfg, bundle)
        models = train_models(bundle, cfg.site, cfg.forecast, boundary)
        path = _models_path(cfg)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_models(models, path)
        info = {
            "models_path": str(path),
            "first_test_day": boundary,
            "interval_half_widths": {n: getattr(models, n).half_width()
                                     for n in ("ev", "pv", "price")},
            "boost_rounds": {n: [e.n_rounds for e in getattr(models, n).estimators]
                             for n in ("ev", "pv", "price")},
        }
        with open(path.parent / "training_report.json", "w") as fh:
            json.dump(info, fh, indent=2, sort_keys=True)
    except Exception as exc:
        _fail(exc)
    click.echo(f"wrote {path}")


@main.command("eval-forecasts")
@click.argument("config", type=click.Path(exists=True))
def eval_forecasts(config: str) -> None:
    """Score hour-0 forecasts on the test days; write accuracy/coverage tables and figures."""
    try:
        cfg = _load_and_check(config)
        bundle = dataio.load_bundle(cfg)
        models = load_models(_models_path(cfg))
        test_days = dataio.select_test_days(cfg, bundle)
        evals = metrics.evaluate_forecasts(models, bundle, test_days)
        rep_dir = cfg.output_dir / "reports"
        (rep_dir / "plotdata").mkdir(parents=True, exist_ok=True)
        (rep_dir / "figures").mkdir(parents=True, exist_ok=True)
        nmae_tbl = pd.DataFrame({t: e.per_season["nmae"] for t, e in evals.items()})
        cpi_tbl = pd.DataFrame({t: e.per_season["cpi"] for t, e in evals.items()})
        nmae_tbl.to_csv(rep_dir / "forecast_nmae.csv")
        cpi_tbl.to_csv(rep_dir / "forecast_cpi.csv")
        report = {
            t: {
                "per_season": e.per_season.to_dict(orient="index"),
                "per_step_nmae": list(map(float, e.per_step_nmae)),
            } for t, e in evals.items()
        }
        with open(rep_dir / "forecast_eval.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
        example_day = test_days[0]
        for target in ("ev", "pv", "price"):
            frame = metrics.forecast_plot_frame(models, bundle, example_day, target)
            frame.to_csv(rep_dir / "plotdata" / f"forecast_{target}_day{example_day:04d}.csv",
                         index=False)
            plotting.forecast_band_figure(
                frame, target,
                rep_dir / "figures" / f"forecast_{target}_day{example_day:04d}.png",
                title=f"{target} forecast issued at hour 0 of day {example_day}")
    except Exception as exc:
        _fail(exc)
    click.echo(nmae_tbl.to_string())
    click.echo(f"reports in {rep_dir}")


@main.command()
@click.argument("config", type=click.Path(exists=True))
@click.option("--controller", "controller_name", required=True,
              type=click.Choice([k.value for k in ControllerKind]))
@click.option("--days", "n_days", type=int, default=None,
              help="Limit the run to the first N selected test days.")
def simulate(config: str, controller_name: str, n_days: int | None) -> None:
    """Run the closed-loop evaluation for one controller over the test days."""
    try:
        cfg = _load_and_check(config)
        kind = ControllerKind(controller_name)
        bundle = dataio.load_bundle(cfg)
        models = None
        if kind is not ControllerKind.OMNISCIENT:
            path = _models_path(cfg)
            if not path.exists():
                raise FileNotFoundError(f"model artifact missing: {path} (run `train` first)")
            models = load_models(path)
        days = dataio.select_test_days(cfg, bundle)
        if n_days is not None:
            days = days[:n_days]
        results = run_days(kind, days, bundle, cfg.battery, models,
                           tol=cfg.solver_tol, workers=cfg.workers)
        ep_dir = cfg.output_dir / "episodes"
        for res in results:
            dataio.write_episode(res, bundle.calendar, ep_dir)
        total = sum(r.total_cost for r in results)
        fallbacks = sum(r.fallback_count for r in results)
    except Exception as exc:
        _fail(exc)
    click.echo(f"{controller_name}: {len(results)} episodes, total cost {total:.2f}, "
               f"fallbacks {fallbacks}; episodes in {ep_dir / controller_name}")


@main.command()
@click.argument("results", nargs=-1, required=True,
                type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default="reports",
              help="Directory for tables, plot data and figures.")
def report(results: tuple[str, ...], out_dir: str) -> None:
    """Aggregate episode results into comparison tables, plot data and figures."""
    try:
        summaries, calendar = dataio.read_summaries(results)
        tables = metrics.control_tables(summaries, calendar)
        out = Path(out_dir)
        (out / "plotdata").mkdir(parents=True, exist_ok=True)
        (out / "figures").mkdir(parents=True, exist_ok=True)
        for name, tbl in tables.items():
            tbl.to_csv(out / f"{name}.csv")
        with open(out / "control_eval.json", "w") as fh:
            json.dump({n: t.to_dict(orient="index") for n, t in tables.items()},
                      fh, indent=2, sort_keys=True)
        if "cost_normalized" in tables:
            plotting.normalized_cost_figure(tables["cost_normalized"],
                                            out / "figures" / "cost_normalized.png")
        # one operation-trace figure per controller, from the first episode found
        seen = set()
        for p in map(Path, results):
            csvs = sorted(p.rglob("day_*.csv")) if p.is_dir() else []
            for c in csvs:
                controller = c.parent.name
                if controller in seen:
                    continue
                seen.add(controller)
                frame = pd.read_csv(c)
                frame["residual_load"] = frame["p_ev"] - frame["p_pv"]
                frame.to_csv(out / "plotdata" / f"operation_{controller}_{c.stem}.csv",
                             index=False)
                plotting.operation_trace_figure(
                    frame, out / "figures" / f"operation_{controller}_{c.stem}.png",
                    title=f"{controller} operation, {c.stem}")
    except Exception as exc:
        _fail(exc)
    for name in ("cost_normalized", "emissions_normalized", "runtime_normalized"):
        if name in tables:
            click.echo(f"--- {name}")
            click.echo(tables[name].round(2).to_string())
    click.echo(f"reports in {out}")


if __name__ == "__main__":
    main()
