"""Energy-hub dispatch: probabilistic forecasting, scenario MPC and closed-loop evaluation."""

from .bundle import DatasetBundle
from .conic import ConicProgram, ConicSolver, Solution
from .forecast import EnbpiModel, GbtModel, ScenarioTree, build_scenario_tree, fit_enbpi, fit_gbt
from .forecast.recipes import ForecastConfig, Site, TargetModels, load_models, save_models, train_models
from .grid import Episode, SiteCalendar, TimeGrid, TimeSeries, day_window, hour_to_quarter_expand
from .hub import BatteryParams, BatteryState, EvSession, PricePair
from .mpc import ControllerKind, MpcPlan, assemble_problem, omniscient_tree, plan
from .simenv import EpisodeResult, PlantState, run_days, run_episode
from .synth import synth

__version__ = "0.1.0"

__all__ = [
    "DatasetBundle",
    "ConicProgram", "ConicSolver", "Solution",
    "EnbpiModel", "GbtModel", "ScenarioTree", "build_scenario_tree",
    "fit_enbpi", "fit_gbt",
    "ForecastConfig", "Site", "TargetModels", "load_models", "save_models",
    "train_models",
    "Episode", "SiteCalendar", "TimeGrid", "TimeSeries", "day_window",
    "hour_to_quarter_expand",
    "BatteryParams", "BatteryState", "EvSession", "PricePair",
    "ControllerKind", "MpcPlan", "assemble_problem", "omniscient_tree", "plan",
    "EpisodeResult", "PlantState", "run_days", "run_episode",
    "synth",
]
