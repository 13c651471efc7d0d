"""Optimal-control design of periodic orbits for underactuated mechanical
systems with impacts, with the compass biped with torso as reference model."""

from .biped import BipedParams, make_biped_system
from .config import RunConfig, load_config, load_preset
from .designer import (ContinuationSchedule, DesignProblem, DesignResult, StrategySettings, StrategyTrace,
                       design_orbit, verify_periodic_orbit)
from .integration import Curve, TimeGrid, Trajectory, integrate
from .pronto import CostSpec, ProntoOptions, TrackingProblem, pronto_solve
from .runner import run_strategy

__version__ = "0.1.0"

__all__ = [
    "BipedParams", "ContinuationSchedule", "CostSpec", "Curve", "DesignProblem", "DesignResult",
    "ProntoOptions", "RunConfig", "StrategySettings", "StrategyTrace", "TimeGrid", "TrackingProblem",
    "Trajectory", "design_orbit", "integrate", "load_config", "load_preset", "make_biped_system",
    "pronto_solve", "run_strategy", "verify_periodic_orbit",
]
