"""Passing sight distance prediction and overtaking warnings for two-lane roads."""

from .kinematics import AccelModel, ModelKind, VehicleParams
from .psd import (
    OvertakeContext,
    PsdResult,
    SafetyParams,
    SecondLead,
    Variant,
    required_sight_distance,
)
from .road import RoadRoute, RoadStation, load_route
from .visibility import DsmGrid, VisibilityTable, precompute_visibility

__version__ = "0.1.0"

__all__ = [
    "AccelModel",
    "DsmGrid",
    "ModelKind",
    "OvertakeContext",
    "PsdResult",
    "RoadRoute",
    "RoadStation",
    "SafetyParams",
    "SecondLead",
    "Variant",
    "VehicleParams",
    "VisibilityTable",
    "load_route",
    "precompute_visibility",
    "required_sight_distance",
]
