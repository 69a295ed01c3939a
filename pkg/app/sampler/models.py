"""Sampler data types: backward orbits and point clouds."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from app.core.config import get_settings
from app.core.exceptions import RootSolverFailure
from app.core.projective import ProjectivePoint, embed


@dataclass(frozen=True, eq=False)
class BackwardOrbit:
    """Finite truncation (x_0, x_-1, ..., x_-N) of a point of the natural extension.

    points[j] is x_-j. residuals[j] is the chordal distance from f(x_-(j+1)) to x_-j.
    """

    points: np.ndarray  # (N+1, k+1)
    residuals: np.ndarray  # (N,)
    rng_seed: int
    index: int = 0
    map_id: str = ""

    def __post_init__(self):
        tol = get_settings().PREIMAGE_RESIDUAL_TOL
        if len(self.residuals) and float(np.max(self.residuals)) > tol:
            raise RootSolverFailure(
                f"Orbit {self.index}: residual {float(np.max(self.residuals)):.2e} above {tol:.0e}"
            )

    @property
    def depth(self) -> int:
        return len(self.points) - 1

    @property
    def start(self) -> ProjectivePoint:
        return ProjectivePoint(self.points[0])

    @property
    def orbit_id(self) -> str:
        return f"{self.map_id}:{self.rng_seed}:{self.index}"


@dataclass(frozen=True, eq=False)
class SampleCloud:
    """Point set approximating the equilibrium measure, with its provenance."""

    points: np.ndarray  # (count, k+1), normalized
    depth: int
    seed_point: ProjectivePoint
    rng_seed: int
    map_id: str = ""
    discards: int = 0
    stage: str = "sample"

    def __post_init__(self):
        if len(self.points) == 0:
            raise ValueError("A sample cloud needs at least one point")

    @property
    def count(self) -> int:
        return len(self.points)

    @property
    def k(self) -> int:
        return self.points.shape[1] - 1

    @cached_property
    def embedded(self) -> np.ndarray:
        return embed(self.points)

    @cached_property
    def tree(self) -> cKDTree:
        """KD-tree on the isometric embedding; Euclidean radius = chordal radius."""
        return cKDTree(self.embedded)

    def subset(self, count: int, stage: Optional[str] = None) -> "SampleCloud":
        return SampleCloud(
            points=self.points[:count],
            depth=self.depth,
            seed_point=self.seed_point,
            rng_seed=self.rng_seed,
            map_id=self.map_id,
            discards=self.discards,
            stage=stage or self.stage,
        )

