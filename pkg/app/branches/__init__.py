"""Inverse branches - radius schedules, certificates and slow-variation checks."""

from app.branches.models import (
    CertificationSummary,
    InverseBranchCertificate,
    RadiusSchedule,
    SlowFunctionCheck,
    USelector,
)
from app.branches.service import BranchService
from app.branches.slow_variation import slow_variation_check

__all__ = [
    "BranchService",
    "CertificationSummary",
    "InverseBranchCertificate",
    "RadiusSchedule",
    "SlowFunctionCheck",
    "USelector",
    "slow_variation_check",
]
