"""Core module - config, exceptions, projective geometry, rng streams, parallelism."""

from app.core.config import get_settings, Settings
from app.core.exceptions import (
    AppException,
    ConfigError,
    StageFailure,
)
from app.core.projective import ProjectivePoint

__all__ = [
    "get_settings",
    "Settings",
    "AppException",
    "ConfigError",
    "StageFailure",
    "ProjectivePoint",
]
