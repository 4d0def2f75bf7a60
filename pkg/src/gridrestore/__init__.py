"""Restoration planning for radial distribution feeders with DERs."""

from .model import (
    Bus,
    Demand,
    Generator,
    Line,
    Network,
    TimeGrid,
    ValidationReport,
    apply_damage,
    load_case,
    save_case,
    validate,
)
from .scenarios import (
    DerMode,
    DerPlacement,
    EffectiveCase,
    apply_der_mode,
    enumerate_cases,
    home_microgrid_load,
    load_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "Bus",
    "Line",
    "Generator",
    "Demand",
    "Network",
    "TimeGrid",
    "ValidationReport",
    "load_case",
    "save_case",
    "validate",
    "apply_damage",
    "DerMode",
    "DerPlacement",
    "EffectiveCase",
    "apply_der_mode",
    "enumerate_cases",
    "home_microgrid_load",
    "load_scenario",
    "__version__",
]
