"""Dimension-related models and schemas."""

from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field


class DimensionMethod(str, Enum):
    LOCAL_SLOPE = "local_slope"
    CORRELATION = "correlation"
    BOX_COUNT = "box_count"


class RadiiSchedule(BaseModel):
    """Geometric radii rho_n = rho0 * e^{-n h}, n = 0 .. n_radii-1."""
    rho0: float = Field(..., gt=0)
    h: float = Field(..., gt=0)
    n_radii: int = Field(..., ge=2)

    @property
    def radii(self) -> np.ndarray:
        return self.rho0 * np.exp(-self.h * np.arange(self.n_radii))


class LocalDimension(BaseModel):
    """Regression of log ball mass on log radius around one center."""
    slope: float
    intercept: float
    r2: float
    stderr: float
    radii_used: int
    min_ratio: float = Field(..., description="min log mass / log rho (liminf surrogate)")
    max_ratio: float = Field(..., description="max log mass / log rho (limsup surrogate)")
    radii_outside_window: int = Field(
        0, description="radii below 5 x the nearest-neighbour spacing or above 0.3 x the support diameter"
    )


class DimensionEstimate(BaseModel):
    map_id: str
    method: DimensionMethod
    dim_hat: float
    ci: Tuple[float, float]
    local_dims: List[float] = Field(default_factory=list)
    radii_schedule: RadiiSchedule
    reference_count: int
    n_centers: int = 0
    dropped: int = 0
    young_ok: bool = True

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci[1] - self.ci[0])

    def histogram(self, bins: int = 20) -> Dict[str, List[float]]:
        if not self.local_dims:
            return {"edges": [], "counts": []}
        counts, edges = np.histogram(self.local_dims, bins=bins)
        return {"edges": [float(e) for e in edges], "counts": [float(c) for c in counts]}


class TheoremBounds(BaseModel):
    """lower = log d_t / chi_k, upper = 2k - (2 Sigma - log d_t) / chi_k."""
    k: int
    d_t: int
    sigma: float
    chi_k: float
    lower: float
    upper: float
    rho: float = 0.0
    alpha_eps_curve: List[Tuple[float, float]] = Field(default_factory=list)


class BoundsVerdict(BaseModel):
    map_id: str
    lower: float
    upper: float
    dim_hat: float
    slack: float
    pass_lower: bool
    pass_upper: bool
    alpha_eps_curve: List[Tuple[float, float]] = Field(default_factory=list)
    provenance: Dict[str, Any] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.pass_lower and self.pass_upper


class MinorationReport(BaseModel):
    """ball_mass(B(x_0, sigma_hat delta_n)) <= d_t^-n along test orbits."""
    map_id: str
    sigma_hat: float
    eps: float
    rho_hat: float
    depths: List[int] = Field(default_factory=list)
    delta: List[float] = Field(default_factory=list)
    bound: List[float] = Field(default_factory=list)
    max_test_mass: List[float] = Field(default_factory=list)
    n_train: int = 0
    n_test: int = 0
    violations: int = 0
    ok: bool = True
    note: Optional[str] = None
