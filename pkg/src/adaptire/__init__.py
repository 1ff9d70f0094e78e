"""Condition-adapted Magic Formula tire model and yaw stability control simulation."""

from .exceptions import (
    AdaptireError,
    CoefficientError,
    FitError,
    StabilityBoundError,
    TrainingDivergedError,
    UnderSampledError,
    WheelLiftError,
)
from .mf_adapt import AdaptedMfCoefficients, TireConditions, load_tree, save_tree
from .mf_core import BaseMfCoefficients, TireForceState, lateral_force
from .rnn import SurfaceTemperatureRNN
from .vehicle import BicycleReference, PlantState, VehicleParameters

__version__ = "0.1.0"

__all__ = [
    "AdaptedMfCoefficients",
    "AdaptireError",
    "BaseMfCoefficients",
    "BicycleReference",
    "CoefficientError",
    "FitError",
    "PlantState",
    "StabilityBoundError",
    "SurfaceTemperatureRNN",
    "TireConditions",
    "TireForceState",
    "TrainingDivergedError",
    "UnderSampledError",
    "VehicleParameters",
    "WheelLiftError",
    "lateral_force",
    "load_tree",
    "save_tree",
]
