"""Lyapunov module - exponent spectrum and the Jacobian sum."""

from app.lyapunov.models import LyapunovEstimate
from app.lyapunov.service import LyapunovService

__all__ = ["LyapunovService", "LyapunovEstimate"]
