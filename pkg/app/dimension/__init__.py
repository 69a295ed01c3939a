"""Dimension module - local dimension estimates, bounds and the verdict."""

from app.dimension.bounds import theorem_bounds, verify_theorem
from app.dimension.minoration import minoration_check
from app.dimension.models import (
    BoundsVerdict,
    DimensionEstimate,
    DimensionMethod,
    MinorationReport,
    RadiiSchedule,
)
from app.dimension.service import DimensionService

__all__ = [
    "BoundsVerdict",
    "DimensionEstimate",
    "DimensionMethod",
    "DimensionService",
    "MinorationReport",
    "RadiiSchedule",
    "minoration_check",
    "theorem_bounds",
    "verify_theorem",
]
