"""Point forecasts, conformal intervals and scenario assembly."""

from .gbt import GbtModel, fit_gbt
from .enbpi import EnbpiModel, fit_enbpi
from .scenarios import ScenarioTree, build_scenario_tree

__all__ = [
    "GbtModel",
    "fit_gbt",
    "EnbpiModel",
    "fit_enbpi",
    "ScenarioTree",
    "build_scenario_tree",
]
