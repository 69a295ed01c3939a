"""Sampler module - backward iteration for the equilibrium measure."""

from app.sampler.models import BackwardOrbit, SampleCloud
from app.sampler.service import SamplerService, nearest_to

__all__ = ["SamplerService", "SampleCloud", "BackwardOrbit", "nearest_to"]
