"""Projective points, the chordal metric and tangent-space helpers on P^k.

Conventions:
- Homogeneous coordinates are ordered [z : t] on P^1 and [z : w : t] on P^2.
- A stored point is normalized: its first largest-modulus coordinate is exactly 1
  (that index is the point's chart).
- Chordal distance is sin of the Fubini-Study angle, so the diameter of P^k is 1
  and a chordal ball of radius r has normalized volume r^(2k).

Everything batch-shaped takes arrays of shape (..., k+1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm, qmc

from app.core.exceptions import AllComponentsVanish


def normalize(coords: np.ndarray) -> np.ndarray:
    """Divide every row by its first largest-modulus coordinate."""
    arr = np.asarray(coords, dtype=complex)
    idx = np.argmax(np.abs(arr), axis=-1)
    pivot = np.take_along_axis(arr, idx[..., None], axis=-1)
    if np.any(pivot == 0):
        raise AllComponentsVanish("Homogeneous coordinates are all zero")
    out = arr / pivot
    np.put_along_axis(out, idx[..., None], 1.0 + 0.0j, axis=-1)
    return out


def unit(coords: np.ndarray) -> np.ndarray:
    arr = np.asarray(coords, dtype=complex)
    return arr / np.linalg.norm(arr, axis=-1, keepdims=True)


def chart_index(coords: np.ndarray) -> np.ndarray:
    return np.argmax(np.abs(np.asarray(coords)), axis=-1)


def chordal(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Chordal distance, broadcasting over leading axes.

    Uses the Lagrange identity |a|^2|b|^2 - |<a,b>|^2 = sum_{i<j} |a_i b_j - a_j b_i|^2,
    which keeps full relative accuracy for nearby points.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    n = a.shape[-1]
    wedge = np.zeros(np.broadcast_shapes(a.shape[:-1], b.shape[:-1]))
    for i in range(n):
        for j in range(i + 1, n):
            wedge = wedge + np.abs(a[..., i] * b[..., j] - a[..., j] * b[..., i]) ** 2
    norms = np.sum(np.abs(a) ** 2, axis=-1) * np.sum(np.abs(b) ** 2, axis=-1)
    return np.sqrt(np.clip(wedge / norms, 0.0, 1.0))


def embed(coords: np.ndarray) -> np.ndarray:
    """Isometric embedding of P^k into R^((k+1)^2).

    A point goes to its Hermitian projector x x^H / |x|^2, written in real
    coordinates scaled so Euclidean distance equals chordal distance. KD-trees
    built on these vectors answer chordal ball queries exactly.
    """
    u = unit(coords)
    n = u.shape[-1]
    proj = u[..., :, None] * np.conj(u[..., None, :])
    parts = [np.real(np.diagonal(proj, axis1=-2, axis2=-1))]
    iu, ju = np.triu_indices(n, k=1)
    off = proj[..., iu, ju]
    parts.append(np.sqrt(2.0) * np.real(off))
    parts.append(np.sqrt(2.0) * np.imag(off))
    return np.concatenate(parts, axis=-1) / np.sqrt(2.0)


def tangent_frame(unit_coords: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the tangent space at x, aligned with x's chart.

    Returns shape (..., k+1, k). Columns come from projecting the coordinate
    vectors e_i (i != chart) onto x^perp and orthonormalizing with QR. The frame
    depends only on the point, not on the phase of its representative.
    """
    x = np.asarray(unit_coords, dtype=complex)
    n = x.shape[-1]
    chart = chart_index(x)
    eye = np.eye(n, dtype=complex)
    # (..., n, n): column i is e_i - x conj(x_i)
    proj = eye - x[..., :, None] * np.conj(x[..., None, :])
    cols = np.array([[j for j in range(n) if j != c] for c in range(n)])[chart]
    basis = np.take_along_axis(proj, cols[..., None, :], axis=-1)
    q, _ = np.linalg.qr(basis)
    return q


def affine(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Chart index and the k affine coordinates (pivot coordinate dropped)."""
    pts = normalize(coords)
    chart = chart_index(pts)
    n = pts.shape[-1]
    cols = np.array([[j for j in range(n) if j != c] for c in range(n)])[chart]
    return chart, np.take_along_axis(pts, cols, axis=-1)


def _ball_from_uniforms(center: np.ndarray, radius: float, radial: np.ndarray, gauss: np.ndarray) -> np.ndarray:
    """Map radial uniforms and tangent Gaussians to points of a chordal ball."""
    x = unit(center)
    k = x.shape[-1] - 1
    frame = tangent_frame(x)
    r = min(float(radius), 1.0)
    s = r * radial ** (1.0 / (2 * k))
    s = np.minimum(s, 1.0 - 1e-16)
    direction = gauss[:, :k] + 1j * gauss[:, k:]
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    tangent = direction @ frame.T
    length = s / np.sqrt(1.0 - s**2)
    return normalize(x[None, :] + length[:, None] * tangent)


def sample_ball(center: np.ndarray, radius: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform (volume-weighted) random points in a chordal ball."""
    k = np.asarray(center).shape[-1] - 1
    radial = rng.random(n)
    gauss = rng.standard_normal((n, 2 * k))
    return _ball_from_uniforms(center, radius, radial, gauss)


def halton_ball(center: np.ndarray, radius: float, n: int, seed: int = 0) -> np.ndarray:
    """Quasi-uniform probe points in a chordal ball (scrambled Halton)."""
    k = np.asarray(center).shape[-1] - 1
    sampler = qmc.Halton(d=2 * k + 1, scramble=True, seed=seed)
    u = sampler.random(n)
    u = np.clip(u, 1e-12, 1.0 - 1e-12)
    return _ball_from_uniforms(center, radius, u[:, 0], norm.ppf(u[:, 1:]))


def random_points(k: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Fubini-Study uniform random points of P^k."""
    g = rng.standard_normal((n, k + 1)) + 1j * rng.standard_normal((n, k + 1))
    return normalize(g)


@dataclass(frozen=True, eq=False)
class ProjectivePoint:
    """A point of P^k stored in normalized homogeneous coordinates."""

    coords: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coords, dtype=complex).reshape(-1)
        if arr.size < 2:
            raise ValueError("A projective point needs at least two coordinates")
        object.__setattr__(self, "coords", normalize(arr))

    @classmethod
    def of(cls, *coords: complex) -> "ProjectivePoint":
        return cls(np.array(coords, dtype=complex))

    @classmethod
    def affine_point(cls, *values: complex) -> "ProjectivePoint":
        """[z : 1] or [z : w : 1]."""
        return cls(np.array(list(values) + [1.0], dtype=complex))

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]]) -> "ProjectivePoint":
        """From [[re, im], ...] as written in JSON files."""
        return cls(np.array([complex(re, im) for re, im in pairs], dtype=complex))

    @property
    def k(self) -> int:
        return self.coords.size - 1

    @property
    def chart(self) -> int:
        return int(chart_index(self.coords))

    def unit(self) -> np.ndarray:
        return unit(self.coords)

    def distance(self, other: "ProjectivePoint") -> float:
        return float(chordal(self.coords, other.coords))

    def to_pairs(self) -> list[list[float]]:
        return [[float(c.real), float(c.imag)] for c in self.coords]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProjectivePoint):
            return NotImplemented
        return self.coords.shape == other.coords.shape and bool(np.all(self.coords == other.coords))

    def __hash__(self) -> int:
        return hash(self.coords.tobytes())

    def __repr__(self) -> str:
        inner = " : ".join(f"{c.real:.6g}{c.imag:+.6g}j" for c in self.coords)
        return f"ProjectivePoint[{inner}]"


def cluster(points: np.ndarray, tol: float, weights: Optional[np.ndarray] = None) -> tuple[np.ndarray, np.ndarray]:
    """Greedy clustering by chordal distance; returns representatives and summed weights."""
    pts = normalize(np.atleast_2d(points))
    w = np.ones(len(pts), dtype=int) if weights is None else np.asarray(weights)
    reps: list[np.ndarray] = []
    members: list[list[int]] = []
    for i, p in enumerate(pts):
        for j, rep in enumerate(reps):
            if chordal(p, rep) <= tol:
                members[j].append(i)
                break
        else:
            reps.append(p)
            members.append([i])
    out = []
    for group in members:
        if len(group) == 1:
            out.append(pts[group[0]])
            continue
        # average the group in the chart of its first member
        c = int(chart_index(pts[group[0]]))
        sub = pts[group] / pts[group][:, c : c + 1]
        out.append(normalize(sub.mean(axis=0)))
    counts = np.array([int(np.sum(w[g])) for g in members], dtype=int)
    if not out:
        return np.zeros((0, pts.shape[-1]), dtype=complex), counts
    return np.stack(out), counts
