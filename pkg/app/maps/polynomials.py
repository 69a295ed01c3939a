"""Homogeneous polynomials in k+1 variables and binary-form root solving."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly

from app.core.config import get_settings
from app.core.projective import cluster

Exponent = Tuple[int, ...]


def _merge(terms: Mapping[Exponent, complex], out: Dict[Exponent, complex], scale: complex = 1.0) -> None:
    for exps, coeff in terms.items():
        out[exps] = out.get(exps, 0.0) + scale * coeff


@dataclass(frozen=True, eq=False)
class HomogeneousPolynomial:
    """Sum of coefficient * prod x_i^e_i with all exponent rows of equal total degree."""

    exponents: np.ndarray  # (m, nvars) int
    coefficients: np.ndarray  # (m,) complex
    nvars: int

    @classmethod
    def from_terms(cls, terms: Mapping[Exponent, complex], nvars: int) -> "HomogeneousPolynomial":
        kept = {tuple(int(e) for e in exps): complex(c) for exps, c in terms.items() if c != 0}
        degrees = {sum(exps) for exps in kept}
        if len(degrees) > 1:
            raise ValueError(f"Polynomial is not homogeneous (degrees {sorted(degrees)})")
        if any(len(exps) != nvars for exps in kept):
            raise ValueError("Exponent length does not match the number of variables")
        keys = sorted(kept)
        exps = np.array(keys, dtype=int).reshape(len(keys), nvars)
        coeffs = np.array([kept[key] for key in keys], dtype=complex)
        return cls(exponents=exps, coefficients=coeffs, nvars=nvars)

    @classmethod
    def from_binary_coefficients(cls, coefficients: Sequence[complex]) -> "HomogeneousPolynomial":
        """Dense binary form: coefficients[a] multiplies z^a t^(d-a)."""
        d = len(coefficients) - 1
        return cls.from_terms({(a, d - a): c for a, c in enumerate(coefficients)}, nvars=2)

    @classmethod
    def monomial(cls, exps: Exponent, coeff: complex = 1.0) -> "HomogeneousPolynomial":
        return cls.from_terms({tuple(exps): coeff}, nvars=len(exps))

    @classmethod
    def zero(cls, nvars: int) -> "HomogeneousPolynomial":
        return cls.from_terms({}, nvars=nvars)

    @property
    def terms(self) -> Dict[Exponent, complex]:
        return {tuple(int(e) for e in row): complex(c) for row, c in zip(self.exponents, self.coefficients)}

    @property
    def degree(self) -> int:
        if len(self.exponents) == 0:
            return 0
        return int(self.exponents[0].sum())

    @property
    def is_zero(self) -> bool:
        return len(self.coefficients) == 0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        if self.is_zero:
            return np.zeros(x.shape[:-1], dtype=complex)
        deg = int(self.exponents.max())
        ones = np.ones(x.shape + (1,), dtype=complex)
        if deg > 0:
            rep = np.repeat(x[..., None], deg, axis=-1)
            powers = np.concatenate([ones, np.cumprod(rep, axis=-1)], axis=-1)
        else:
            powers = ones
        # powers[..., v, e] = x_v^e; gather to (..., m, nvars)
        picked = powers[..., np.arange(self.nvars)[None, :], self.exponents]
        return np.prod(picked, axis=-1) @ self.coefficients

    def partial(self, var: int) -> "HomogeneousPolynomial":
        out: Dict[Exponent, complex] = {}
        for exps, c in self.terms.items():
            if exps[var] == 0:
                continue
            new = list(exps)
            new[var] -= 1
            out[tuple(new)] = out.get(tuple(new), 0.0) + c * exps[var]
        return HomogeneousPolynomial.from_terms(out, self.nvars)

    @cached_property
    def partials(self) -> List["HomogeneousPolynomial"]:
        return [self.partial(i) for i in range(self.nvars)]

    @cached_property
    def second_partials(self) -> List[List["HomogeneousPolynomial"]]:
        return [[p.partial(j) for j in range(self.nvars)] for p in self.partials]

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.stack([p(x) for p in self.partials], axis=-1)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return np.stack([np.stack([q(x) for q in row], axis=-1) for row in self.second_partials], axis=-2)

    def __add__(self, other: "HomogeneousPolynomial") -> "HomogeneousPolynomial":
        out: Dict[Exponent, complex] = {}
        _merge(self.terms, out)
        _merge(other.terms, out)
        return HomogeneousPolynomial.from_terms(out, self.nvars)

    def __sub__(self, other: "HomogeneousPolynomial") -> "HomogeneousPolynomial":
        out: Dict[Exponent, complex] = {}
        _merge(self.terms, out)
        _merge(other.terms, out, scale=-1.0)
        return HomogeneousPolynomial.from_terms(out, self.nvars)

    def __mul__(self, other) -> "HomogeneousPolynomial":
        if not isinstance(other, HomogeneousPolynomial):
            return HomogeneousPolynomial.from_terms({e: c * other for e, c in self.terms.items()}, self.nvars)
        out: Dict[Exponent, complex] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                key = tuple(a + b for a, b in zip(e1, e2))
                out[key] = out.get(key, 0.0) + c1 * c2
        return HomogeneousPolynomial.from_terms(out, self.nvars)

    __rmul__ = __mul__

    def power(self, n: int) -> "HomogeneousPolynomial":
        result = HomogeneousPolynomial.monomial((0,) * self.nvars)
        for _ in range(n):
            result = result * self
        return result

    def compose(self, substitutions: Sequence["HomogeneousPolynomial"]) -> "HomogeneousPolynomial":
        """self(G_0, ..., G_k) for homogeneous G_i of a common degree."""
        if len(substitutions) != self.nvars:
            raise ValueError("One substitution per variable is required")
        nv = substitutions[0].nvars
        cache: Dict[Tuple[int, int], HomogeneousPolynomial] = {}

        def pw(var: int, e: int) -> HomogeneousPolynomial:
            if (var, e) not in cache:
                cache[(var, e)] = substitutions[var].power(e)
            return cache[(var, e)]

        out: Dict[Exponent, complex] = {}
        for exps, c in self.terms.items():
            term = HomogeneousPolynomial.monomial((0,) * nv, c)
            for var, e in enumerate(exps):
                if e:
                    term = term * pw(var, e)
            _merge(term.terms, out)
        return HomogeneousPolynomial.from_terms(out, nv)

    def binary_coefficients(self) -> np.ndarray:
        """Dense ascending-in-z coefficients of a binary form (nvars == 2)."""
        if self.nvars != 2:
            raise ValueError("Only binary forms have dense coefficients")
        d = self.degree
        out = np.zeros(d + 1, dtype=complex)
        for exps, c in self.terms.items():
            out[exps[0]] += c
        return out

    def scale_norm(self) -> float:
        return float(np.max(np.abs(self.coefficients))) if not self.is_zero else 0.0



def determinant(matrix: Sequence[Sequence[HomogeneousPolynomial]]) -> HomogeneousPolynomial:
    """Cofactor expansion (k+1 <= 3 here)."""
    n = len(matrix)
    if n == 1:
        return matrix[0][0]
    if n == 2:
        return matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0]
    total = None
    for j in range(n):
        minor = [[row[c] for c in range(n) if c != j] for row in matrix[1:]]
        term = matrix[0][j] * determinant(minor)
        if j % 2:
            term = term * -1.0
        total = term if total is None else total + term
    return total


def sylvester_matrix(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Sylvester matrix of two binary forms given by dense ascending coefficients."""
    m, n = len(p) - 1, len(q) - 1
    size = m + n
    out = np.zeros((size, size), dtype=complex)
    for i in range(n):
        out[i, i : i + m + 1] = p
    for i in range(m):
        out[n + i, i : i + n + 1] = q
    return out


# ==================== binary-form roots ====================


def _polish(roots: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """One Newton step on each affine root (skipped where the derivative vanishes)."""
    deriv = npoly.polyder(coeffs)
    val = npoly.polyval(roots, coeffs)
    der = npoly.polyval(roots, deriv) if len(deriv) else np.zeros_like(roots)
    safe = np.abs(der) > 1e-12 * np.maximum(1.0, np.abs(val))
    step = np.where(safe, val / np.where(safe, der, 1.0), 0.0)
    return roots - step


def binary_roots(coefficients: Sequence[complex]) -> Tuple[np.ndarray, np.ndarray]:
    """All projective roots of a binary form, clustered with multiplicities.

    coefficients[a] multiplies z^a t^(d-a). Returns (points (m, 2), multiplicities);
    multiplicities sum to d for a nonzero form.
    """
    settings = get_settings()
    c = np.asarray(coefficients, dtype=complex)
    d = len(c) - 1
    scale = float(np.max(np.abs(c))) if d >= 0 else 0.0
    if scale == 0.0:
        raise ValueError("Zero binary form has no isolated roots")
    tiny = np.abs(c) <= settings.ZERO_COMPONENT_TOL * scale
    low = 0
    while low <= d and tiny[low]:
        low += 1
    high = d
    while high >= 0 and tiny[high]:
        high -= 1
    pts: List[np.ndarray] = []
    pts += [np.array([0.0, 1.0], dtype=complex)] * low
    pts += [np.array([1.0, 0.0], dtype=complex)] * (d - high)
    core = c[low : high + 1]
    if len(core) > 1:
        if abs(core[-1]) >= abs(core[0]):
            z = _polish(npoly.polyroots(core), core)
            pts += [np.array([zi, 1.0]) for zi in z]
        else:
            rev = core[::-1]
            s = _polish(npoly.polyroots(rev), rev)
            pts += [np.array([1.0, si]) for si in s]
    points = np.stack(pts)
    return cluster(points, settings.ROOT_CLUSTER_TOL)


def batched_binary_roots(coefficients: np.ndarray) -> np.ndarray:
    """Roots of many binary forms of the same degree, listed with multiplicity.

    coefficients has shape (n, d+1); returns homogeneous roots of shape (n, d, 2).
    Each row is solved in the chart of its larger end coefficient with a batched
    companion matrix, then polished by one Newton step. Rows whose end
    coefficients both vanish fall back to the scalar solver.
    """
    settings = get_settings()
    C = np.asarray(coefficients, dtype=complex)
    n, d1 = C.shape
    d = d1 - 1
    out = np.zeros((n, d, 2), dtype=complex)
    scale = np.max(np.abs(C), axis=1)
    lead, const = np.abs(C[:, d]), np.abs(C[:, 0])
    degenerate = np.maximum(lead, const) <= settings.ZERO_COMPONENT_TOL * np.maximum(scale, 1e-300)
    flip = (const > lead) & ~degenerate
    A = np.where(flip[:, None], C[:, ::-1], C)
    good = ~degenerate
    if np.any(good):
        a = A[good]
        monic = a[:, :d] / a[:, d : d + 1]
        if d == 1:
            roots = -monic
        else:
            comp = np.zeros((len(a), d, d), dtype=complex)
            comp[:, np.arange(1, d), np.arange(d - 1)] = 1.0
            comp[:, :, -1] = -monic
            roots = np.linalg.eigvals(comp)
        # one Horner Newton step per root
        der = np.zeros_like(roots)
        full = np.concatenate([monic, np.ones((len(a), 1), dtype=complex)], axis=1)
        val = np.zeros_like(roots)
        for j in range(d, -1, -1):
            der = der * roots + val
            val = val * roots + full[:, j : j + 1]
        safe = np.abs(der) > 1e-12 * np.maximum(1.0, np.abs(val))
        roots = roots - np.where(safe, val / np.where(safe, der, 1.0), 0.0)
        f = flip[good][:, None]
        ones = np.ones_like(roots)
        out[good, :, 0] = np.where(f, ones, roots)
        out[good, :, 1] = np.where(f, roots, ones)
    for i in np.nonzero(degenerate)[0]:
        pts, mult = binary_roots(C[i])
        out[i] = np.repeat(pts, mult, axis=0)[:d]
    return out
