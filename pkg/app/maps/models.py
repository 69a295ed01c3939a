"""Map-related models and schemas."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from app.core.exceptions import HypothesisViolation, InvalidMapDefinition
from app.maps.polynomials import HomogeneousPolynomial


class MapKind(str, Enum):
    """Supported map families."""
    RATIONAL_P1 = "rational_P1"
    HOMOGENEOUS_PK = "homogeneous_Pk"
    POLYNOMIAL_SKEW_PRODUCT = "polynomial_skew_product"


# ==================== Definition file schema ====================


class TermSpec(BaseModel):
    """One monomial: coefficient [re, im] and exponents (e_0, ..., e_k)."""
    coeff: List[float] = Field(..., min_length=2, max_length=2)
    exponents: List[int]


class PolynomialSpec(BaseModel):
    """A homogeneous component, either dense binary (k=1) or by terms."""
    coefficients: Optional[List[List[float]]] = Field(
        None, description="k=1 only: [[re, im], ...] ascending in z, homogenised by t"
    )
    terms: Optional[List[TermSpec]] = None

    @model_validator(mode="after")
    def _one_form(self):
        if (self.coefficients is None) == (self.terms is None):
            raise ValueError("Give exactly one of 'coefficients' or 'terms'")
        return self

    def to_polynomial(self, nvars: int) -> HomogeneousPolynomial:
        if self.coefficients is not None:
            if nvars != 2:
                raise ValueError("Dense coefficients are only allowed on P^1")
            return HomogeneousPolynomial.from_binary_coefficients([complex(re, im) for re, im in self.coefficients])
        terms = {}
        for term in self.terms or []:
            key = tuple(term.exponents)
            terms[key] = terms.get(key, 0.0) + complex(term.coeff[0], term.coeff[1])
        return HomogeneousPolynomial.from_terms(terms, nvars)


class MapDefinition(BaseModel):
    """Map definition file (JSON)."""
    id: str = Field(..., min_length=1)
    kind: MapKind
    dimension: int = Field(..., ge=1, le=2)
    degree: int = Field(..., ge=1)
    topological_degree: int = Field(..., ge=1)
    dynamical_degrees: List[int] = Field(..., min_length=1)
    components: List[PolynomialSpec]
    exceptional_polynomials: List[PolynomialSpec] = Field(default_factory=list)
    exceptional_points: List[List[List[float]]] = Field(default_factory=list)
    description: str = ""

    @model_validator(mode="after")
    def _shapes(self):
        if len(self.components) != self.dimension + 1:
            raise ValueError(f"Expected {self.dimension + 1} components, got {len(self.components)}")
        if len(self.dynamical_degrees) != self.dimension:
            raise ValueError("dynamical_degrees must list lambda_1 .. lambda_k")
        if self.kind == MapKind.RATIONAL_P1 and self.dimension != 1:
            raise ValueError("rational_P1 maps live on P^1")
        if self.kind == MapKind.POLYNOMIAL_SKEW_PRODUCT and self.dimension != 2:
            raise ValueError("Skew products live on P^2")
        return self


# ==================== Runtime model ====================


@dataclass(frozen=True, eq=False)
class MapModel:
    """An explicit endomorphism of P^k (k = 1 or 2). Immutable after construction.

    j_points holds the finite exceptional set on P^1. On P^2 the exceptional set
    is described by j_polynomials (declared curves and their pullbacks).
    """

    id: str
    kind: MapKind
    k: int
    degree: int
    d_t: int
    dyn_degrees: List[int]
    components: List[HomogeneousPolynomial]
    critical: HomogeneousPolynomial
    exceptional_polynomials: List[HomogeneousPolynomial] = field(default_factory=list)
    j_polynomials: List[HomogeneousPolynomial] = field(default_factory=list)
    j_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=complex))
    critical_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=complex))
    description: str = ""

    def __post_init__(self):
        if self.k not in (1, 2):
            raise InvalidMapDefinition(f"Unsupported dimension k={self.k}")
        if len(self.components) != self.k + 1:
            raise InvalidMapDefinition("A map of P^k needs k+1 components")
        if any(c.degree != self.degree for c in self.components if not c.is_zero):
            raise InvalidMapDefinition("Components must share the declared algebraic degree")
        if self.kind == MapKind.HOMOGENEOUS_PK:
            expected = [self.degree**l for l in range(1, self.k + 1)]
            if self.d_t != self.degree**self.k or list(self.dyn_degrees) != expected:
                raise InvalidMapDefinition(
                    f"Holomorphic maps of P^{self.k} need d_t = d^k and lambda_l = d^l "
                    f"(declared d_t={self.d_t}, lambdas={self.dyn_degrees})"
                )
        lam_km1 = self.lambda_k_minus_1
        if not self.d_t > lam_km1:
            raise HypothesisViolation(f"{self.id}: d_t={self.d_t} is not > lambda_(k-1)={lam_km1}")

    @property
    def lambda_k_minus_1(self) -> int:
        # lambda_0 = 1
        return 1 if self.k == 1 else int(self.dyn_degrees[self.k - 2])

    @property
    def nvars(self) -> int:
        return self.k + 1


@dataclass(frozen=True)
class TangentMatrix:
    """Differential of f at x between orthonormal Fubini-Study frames."""

    entries: np.ndarray  # (k, k) complex
    op_norm: float
    inv_norm: float
    fs_jacobian: float


@dataclass(frozen=True)
class DerivativeData:
    """Batched norms of df (and a second-derivative size) at many points."""

    op_norm: np.ndarray
    inv_norm: np.ndarray
    jacobian: np.ndarray
    second: np.ndarray


class DegreeReport(BaseModel):
    """Numerical degree check for a map."""
    map_id: str
    d_t_declared: int
    d_t_numeric: int
    counts: List[int] = Field(default_factory=list, description="Preimage count per random target")
    lambda_k_minus_1: int
    hypothesis_ok: bool


class MapSummary(BaseModel):
    """Listing entry for bundled maps."""
    id: str
    kind: MapKind
    dimension: int
    degree: int
    topological_degree: int
    dynamical_degrees: List[int]
    description: str = ""
