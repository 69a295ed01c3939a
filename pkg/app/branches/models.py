"""Inverse-branch certificate models and schemas."""

from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, Field


class USelector(str, Enum):
    """Observable u evaluated along a backward orbit."""
    DIST_TO_J = "dist_to_J"
    MIN_DERIVATIVE_DATA = "min_derivative_data"
    OP_NORM = "op_norm"
    INV_NORM = "inv_norm"
    JACOBIAN = "jacobian"


class ScheduleEntry(BaseModel):
    """Radius and derivative data for the branch from x_-n to x_-(n+1)."""
    n: int
    r_n: float
    M_n_hat: float = Field(..., description="1 + sup of derivative data over the probe ball")
    alpha_n: float = Field(..., description="min{1, |df|, |df^-1|, Jac f} at x_-(n+1)")
    op_norm: float
    inv_norm: float
    jacobian: float
    second: float = Field(0.0, description="Size of d^2 f at x_-(n+1)")
    dist_J: float = Field(..., description="Distance from x_-n to the exceptional set")


class RadiusSchedule(BaseModel):
    """Per-depth radii along one backward orbit."""
    orbit_id: str
    eps: float
    A1_hat: float
    C: float
    entries: List[ScheduleEntry] = Field(default_factory=list)

    def scaled(self, n: int, factor: float) -> "RadiusSchedule":
        """Copy with r_n multiplied by factor (used to probe beyond the certified radius)."""
        entries = [
            e.model_copy(update={"r_n": e.r_n * factor}) if e.n == n else e for e in self.entries
        ]
        return self.model_copy(update={"entries": entries})


class DepthRecord(ScheduleEntry):
    """Schedule entry plus the probe results at that depth."""
    lip_g: float = 0.0
    lip_f: float = 0.0
    jac_min: float = 0.0
    newton_ok: bool = False
    unique_ok: bool = False
    max_residual: float = 0.0
    passed: bool = Field(False, serialization_alias="pass")


class InverseBranchCertificate(BaseModel):
    """Numerical certificate for the inverse branches along one backward orbit."""
    orbit_ref: str
    eps: float
    A1_hat: float
    C: float
    schedule: List[DepthRecord] = Field(default_factory=list)
    max_certified_depth: int = 0
    requested_depth: int = 0
    truncated_reason: Optional[str] = Field(None, description="newton_divergence | bound_failure | too_close_to_J")
    rho_hat: float = 0.0
    eta_hat: float = 0.0
    eta_ok: Optional[bool] = Field(None, description="eta fitted on the first half of the depths holds on the second")
    r_hat: float = 0.0
    composed_identity_error: Optional[float] = None
    inclusion_ok: Optional[bool] = None
    kappa_hat: Optional[float] = None
    kappa_ok: Optional[bool] = Field(None, description="kappa fitted on the first half of the depths holds on the second")
    volume_log_rate: Optional[float] = None
    volume_ok: Optional[bool] = None

    @property
    def fully_certified(self) -> bool:
        return self.requested_depth > 0 and self.max_certified_depth == self.requested_depth


class CertificationSummary(BaseModel):
    """Aggregate over many orbits."""
    map_id: str
    n_orbits: int
    depth: int
    eps: float
    n_full_depth: int
    fraction_full_depth: float
    too_close_to_J: int = 0
    pooled_slope: Optional[float] = None
    rho_max: float = 0.0
    slow_decay_ok: bool = True
    eta_failures: int = 0
    kappa_failures: int = 0
    max_identity_error: Optional[float] = None


class SlowFunctionCheck(BaseModel):
    """Envelope V1 e^{n(chi-eps)} <= prod u(x_-j) <= V2 e^{n(chi+eps)} along an orbit."""
    selector: str
    eps: float
    chi_hat: float
    V1_hat: float
    V2_hat: float
    violations: int
    depths_tested: int
    growth_exponent: Optional[float] = None
