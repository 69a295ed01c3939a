"""Lyapunov-related models and schemas."""

from typing import List

from pydantic import BaseModel, Field


class LyapunovEstimate(BaseModel):
    """Lyapunov spectrum estimated from QR-orthogonalized cocycle products."""
    map_id: str
    chi: List[float] = Field(..., description="Exponents chi_1 <= ... <= chi_k")
    sigma: float = Field(..., description="Sum of the exponents")
    stderr: List[float]
    sigma_stderr: float
    n_cocycle: int = Field(..., description="Block length N")
    n_samples: int
    discards: int = 0
    eps0: float = 0.0
    flags: List[str] = Field(default_factory=list)

    @property
    def chi_k(self) -> float:
        return self.chi[-1]

    @property
    def chi_1(self) -> float:
        return self.chi[0]


class JacobianSum(BaseModel):
    """Sigma from the Jacobian integral: (1/2) * mean log Jac f."""
    map_id: str
    value: float
    stderr: float
    n_used: int
    discards: int = 0


class SumConsistencyReport(BaseModel):
    """Sigma from the QR cocycle against Sigma from the Jacobian integral."""
    map_id: str
    sigma_cocycle: float
    sigma_jacobian: float
    difference: float
    tolerance: float = Field(..., description="3 x combined standard error")
    sum_consistent: bool


class ExponentInequalityReport(BaseModel):
    """chi_1 >= (1/2) log(d_t / lambda_{k-1}) and 2 Sigma >= log d_t, with 3-sigma slack."""
    map_id: str
    chi1: float
    chi1_bound: float
    chi1_margin: float
    chi1_ok: bool
    two_sigma: float
    log_d_t: float
    two_sigma_margin: float
    two_sigma_ok: bool

    @property
    def ok(self) -> bool:
        return self.chi1_ok and self.two_sigma_ok


class LogIntegrabilityReport(BaseModel):
    """Stability of mean |log dist(x, J)| when the sample doubles."""
    map_id: str
    mean_full: float
    mean_half: float
    relative_change: float
    zero_distances: int = 0
    ok: bool
