"""Randomized backward iteration: clouds for the equilibrium measure and backward orbits."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import get_settings
from app.core.exceptions import ExceptionalSeed, OrbitHitsJ
from app.core.parallel import chunk_ranges, map_chunks
from app.core.projective import ProjectivePoint, chordal, embed, normalize, random_points
from app.core.rng import stream
from app.maps.models import MapModel
from app.maps.service import MapService
from app.sampler.models import BackwardOrbit, SampleCloud

logger = logging.getLogger(__name__)
settings = get_settings()

# (step, current point, candidate preimages (d_t, k+1)) -> index of the chosen candidate
BranchSelector = Callable[[int, np.ndarray, np.ndarray], int]

MAX_REDRAW_ROUNDS = 50


@dataclass(frozen=True)
class CloudCheck:
    """Forward-return spot check of a cloud."""
    max_error: float
    max_amplification: float
    checked: int
    ok: bool


def nearest_to(point: ProjectivePoint) -> BranchSelector:
    """Selector that always takes the preimage closest to a fixed point."""

    def select(_step: int, _current: np.ndarray, candidates: np.ndarray) -> int:
        return int(np.argmin(chordal(candidates, point.coords[None, :])))

    return select


class SamplerService:
    # ------------------------------------------------------------------
    # vectorized walks
    # ------------------------------------------------------------------

    @staticmethod
    def _walk_chunk(
        fmap: MapModel,
        starts: np.ndarray,
        depth: int,
        rng_seed: int,
        stage: str,
        first_index: int,
        keep_paths: bool,
    ) -> Tuple[np.ndarray, np.ndarray, int, int]:
        """Run one backward walk per start row, redrawing discarded walks.

        Walk i uses the stream (rng_seed, stage, first_index + i) for every draw,
        including redraws, so the chunk layout never changes a walk.
        Returns (paths (n, depth+1, k+1), residuals (n, depth), discards, attempts).
        """
        n, width = starts.shape
        gens = [stream(rng_seed, stage, first_index + i) for i in range(n)]
        paths = np.zeros((n, depth + 1, width), dtype=complex)
        residuals = np.zeros((n, depth))
        paths[:, 0] = starts
        pending = np.arange(n)
        discards = attempts = 0
        rounds = 0
        while len(pending):
            rounds += 1
            attempts += len(pending)
            choices = np.stack([gens[i].integers(0, fmap.d_t, depth) for i in pending]).reshape(len(pending), depth)
            cur = starts[pending]
            alive = np.ones(len(pending), dtype=bool)
            trail = [cur]
            res = []
            for j in range(depth):
                X, r = MapService.preimage_branch(fmap, cur, choices[:, j])
                dist = MapService.distances_to_J(fmap, X)
                bad = ~(r <= settings.PREIMAGE_RESIDUAL_TOL) | ~(dist >= settings.J_EXCLUSION_TOL)
                alive &= ~bad
                cur = np.where(bad[:, None], cur, X)
                trail.append(cur)
                res.append(np.where(bad, 0.0, r))
            if depth:
                block = np.stack(trail, axis=1)
                paths[pending[alive]] = block[alive]
                residuals[pending[alive]] = np.stack(res, axis=1)[alive]
            failed = int((~alive).sum())
            discards += failed
            pending = pending[~alive]
            if discards > settings.EXCEPTIONAL_DISCARD_FRACTION * attempts or (
                len(pending) and rounds >= MAX_REDRAW_ROUNDS
            ):
                raise ExceptionalSeed(
                    f"{fmap.id}: {discards}/{attempts} backward walks discarded (stage '{stage}')"
                )
        if not keep_paths:
            paths = paths[:, -1:]
        return paths, residuals, discards, attempts

    # ------------------------------------------------------------------
    # clouds
    # ------------------------------------------------------------------

    @classmethod
    def sample_backward_cloud(
        cls,
        fmap: MapModel,
        seed: ProjectivePoint,
        depth: Optional[int] = None,
        count: Optional[int] = None,
        rng_seed: int = 0,
        workers: Optional[int] = None,
        stage: str = "sample",
    ) -> SampleCloud:
        """count points, each an independent uniform depth-fold backward image of seed."""
        depth = settings.SAMPLE_DEPTH if depth is None else depth
        count = settings.SAMPLE_COUNT if count is None else count
        if count <= 0:
            raise ValueError("count must be positive")
        if MapService.distances_to_J(fmap, seed.coords[None, :])[0] < settings.J_EXCLUSION_TOL:
            raise ExceptionalSeed(f"{fmap.id}: seed {seed} lies on the exceptional set")
        if depth == 0:
            return SampleCloud(
                points=np.repeat(seed.coords[None, :], count, axis=0),
                depth=0,
                seed_point=seed,
                rng_seed=rng_seed,
                map_id=fmap.id,
            )

        def run(bounds: Tuple[int, int]):
            lo, hi = bounds
            starts = np.repeat(seed.coords[None, :], hi - lo, axis=0)
            return cls._walk_chunk(fmap, starts, depth, rng_seed, stage, lo, keep_paths=False)

        parts = map_chunks(run, chunk_ranges(count), workers)
        points = np.concatenate([p[0][:, -1] for p in parts], axis=0)
        discards = sum(p[2] for p in parts)
        if discards:
            logger.warning(f"{fmap.id}: {discards} walks discarded and redrawn while sampling")
        logger.info(f"{fmap.id}: sampled cloud of {count} points at depth {depth} (rng_seed={rng_seed})")
        return SampleCloud(
            points=points,
            depth=depth,
            seed_point=seed,
            rng_seed=rng_seed,
            map_id=fmap.id,
            discards=discards,
            stage=stage,
        )

    @classmethod
    def random_generic_point(cls, fmap: MapModel, rng: np.random.Generator, min_distance: float = 1e-3) -> ProjectivePoint:
        """A random point at least min_distance away from the exceptional set."""
        for _ in range(1000):
            x = random_points(fmap.k, 1, rng)
            if MapService.distances_to_J(fmap, x)[0] >= min_distance:
                return ProjectivePoint(x[0])
        raise ExceptionalSeed(f"{fmap.id}: could not find a generic point")

    @classmethod
    def pushforward_cloud(cls, fmap: MapModel, cloud: SampleCloud) -> SampleCloud:
        return SampleCloud(
            points=MapService.evaluate_array(fmap, cloud.points),
            depth=max(cloud.depth - 1, 0),
            seed_point=cloud.seed_point,
            rng_seed=cloud.rng_seed,
            map_id=cloud.map_id,
            discards=cloud.discards,
            stage="pushforward",
        )

    @classmethod
    def verify_cloud(cls, fmap: MapModel, cloud: SampleCloud, n_checks: Optional[int] = None) -> CloudCheck:
        """Forward-iterate a few points depth times and compare with the seed.

        Rounding errors grow with the expansion along the forward path, so the
        allowed error is CLOUD_RETURN_TOL plus machine epsilon times that expansion.
        """
        n_checks = min(n_checks or settings.CLOUD_SPOT_CHECKS, cloud.count)
        X = cloud.points[:n_checks]
        amplification = np.ones(n_checks)
        for _ in range(cloud.depth):
            amplification *= np.maximum(MapService.derivative_data(fmap, X).op_norm, 1.0)
            X = MapService.evaluate_array(fmap, X)
        errors = chordal(X, cloud.seed_point.coords[None, :])
        allowed = settings.CLOUD_RETURN_TOL + np.finfo(float).eps * amplification
        return CloudCheck(
            max_error=float(np.max(errors)),
            max_amplification=float(np.max(amplification)),
            checked=n_checks,
            ok=bool(np.all(errors <= allowed)),
        )

    # ------------------------------------------------------------------
    # orbits
    # ------------------------------------------------------------------

    @classmethod
    def sample_backward_orbit(
        cls,
        fmap: MapModel,
        start: ProjectivePoint,
        depth: int,
        rng_seed: int = 0,
        index: int = 0,
        branch_selector: Optional[BranchSelector] = None,
    ) -> BackwardOrbit:
        """One backward walk; raises OrbitHitsJ instead of redrawing."""
        rng = stream(rng_seed, "orbit", index)
        choices = rng.integers(0, fmap.d_t, depth)
        cur = start.coords
        if MapService.distances_to_J(fmap, cur[None, :])[0] < settings.J_EXCLUSION_TOL:
            raise OrbitHitsJ(f"{fmap.id}: start {start} lies on the exceptional set")
        points = [cur]
        residuals = []
        for j in range(depth):
            candidates = MapService.all_preimages_array(fmap, cur[None, :])[0]
            idx = int(choices[j]) if branch_selector is None else branch_selector(j, cur, candidates)
            X, r = MapService.preimage_branch(fmap, cur[None, :], np.array([idx]))
            if MapService.distances_to_J(fmap, X)[0] < settings.J_EXCLUSION_TOL:
                raise OrbitHitsJ(f"{fmap.id}: backward step {j + 1} hit the exceptional set")
            cur = X[0]
            points.append(cur)
            residuals.append(float(r[0]))
        return BackwardOrbit(
            points=np.stack(points),
            residuals=np.array(residuals),
            rng_seed=rng_seed,
            index=index,
            map_id=fmap.id,
        )

    @classmethod
    def sample_backward_orbits(
        cls,
        fmap: MapModel,
        starts: np.ndarray,
        depth: int,
        rng_seed: int = 0,
        workers: Optional[int] = None,
        stage: str = "orbits",
    ) -> Tuple[List[BackwardOrbit], int]:
        """One orbit per start point, vectorized; walks hitting J are redrawn and counted."""
        starts = normalize(np.atleast_2d(starts))

        def run(bounds: Tuple[int, int]):
            lo, hi = bounds
            return cls._walk_chunk(fmap, starts[lo:hi], depth, rng_seed, stage, lo, keep_paths=True)

        parts = map_chunks(run, chunk_ranges(len(starts)), workers)
        orbits: List[BackwardOrbit] = []
        offset = 0
        for paths, residuals, _, _ in parts:
            for i in range(len(paths)):
                orbits.append(
                    BackwardOrbit(
                        points=paths[i],
                        residuals=residuals[i],
                        rng_seed=rng_seed,
                        index=offset + i,
                        map_id=fmap.id,
                    )
                )
            offset += len(paths)
        discards = sum(p[2] for p in parts)
        logger.info(f"{fmap.id}: sampled {len(orbits)} backward orbits of depth {depth} ({discards} redrawn)")
        return orbits, discards

    @staticmethod
    def burned_in(orbit: BackwardOrbit) -> np.ndarray:
        """Points x_-j with j >= max(10, N/2), for ergodic averages."""
        return orbit.points[max(10, orbit.depth // 2):]

    # ------------------------------------------------------------------
    # ball masses
    # ------------------------------------------------------------------

    @staticmethod
    def ball_mass(cloud: SampleCloud, center: ProjectivePoint, radius: float) -> float:
        """Fraction of cloud points within chordal distance radius of center."""
        if radius <= 0:
            return 0.0
        if radius >= 1.0:
            return 1.0
        hits = cloud.tree.query_ball_point(embed(center.coords), radius, return_length=True)
        return float(hits) / cloud.count

    @staticmethod
    def ball_masses(cloud: SampleCloud, centers: np.ndarray, radii: Sequence[float] | float) -> np.ndarray:
        """Masses for many (center, radius) pairs; radii broadcast against centers."""
        E = embed(normalize(np.atleast_2d(centers)))
        r = np.broadcast_to(np.asarray(radii, dtype=float), (len(E),))
        hits = cloud.tree.query_ball_point(E, np.clip(r, 0.0, None), return_length=True)
        mass = np.asarray(hits, dtype=float) / cloud.count
        mass = np.where(r >= 1.0, 1.0, mass)
        return np.where(r <= 0, 0.0, mass)
