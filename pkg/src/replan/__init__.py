"""Advisor-guided reinforcement learning for community land-use planning."""

__version__ = "0.1.0"

from .domain import FacilitySubtype, FuncType, PlanningConfig, Plot, PlotStatus, Region
from .rewards import Demands, SchemeReport

__all__ = [
    "Demands",
    "FacilitySubtype",
    "FuncType",
    "PlanningConfig",
    "Plot",
    "PlotStatus",
    "Region",
    "SchemeReport",
    "__version__",
]
