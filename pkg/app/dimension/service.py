"""Dimension estimates from sample clouds: local slopes, pair correlation and box counts."""

from __future__ import annotations

import logging
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy import stats

from app.core.config import get_settings
from app.core.exceptions import DimensionEstimateFailed, InsufficientMass
from app.core.projective import ProjectivePoint, chordal, embed, normalize
from app.core.rng import stream
from app.dimension.models import DimensionEstimate, DimensionMethod, LocalDimension, RadiiSchedule
from app.sampler.models import SampleCloud

logger = logging.getLogger(__name__)
settings = get_settings()

DIAMETER_POINTS = 500
BOX_OFFSETS = 4
MIN_BOX_COUNT = 20


def _fit(log_rho: np.ndarray, log_y: np.ndarray) -> LocalDimension:
    fit = stats.linregress(log_rho, log_y)
    ratios = log_y / log_rho
    return LocalDimension(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        r2=float(fit.rvalue**2),
        stderr=float(fit.stderr),
        radii_used=len(log_rho),
        min_ratio=float(np.min(ratios)),
        max_ratio=float(np.max(ratios)),
    )


def _z_value() -> float:
    return float(stats.norm.ppf(0.5 + settings.CI_LEVEL / 2.0))


class DimensionService:
    # ------------------------------------------------------------------
    # radii
    # ------------------------------------------------------------------

    @staticmethod
    def support_diameter(cloud: SampleCloud) -> float:
        pts = cloud.points[:DIAMETER_POINTS]
        return float(np.max(chordal(pts[:, None, :], pts[None, :, :])))

    @classmethod
    def default_schedule(cls, cloud: SampleCloud) -> RadiiSchedule:
        diameter = cls.support_diameter(cloud)
        if diameter <= 0:
            raise InsufficientMass(f"{cloud.map_id}: cloud has zero diameter")
        return RadiiSchedule(
            rho0=settings.RADII_RHO0_FRACTION * diameter,
            h=settings.RADII_H,
            n_radii=settings.RADII_COUNT,
        )

    @staticmethod
    def nearest_neighbour_scale(cloud: SampleCloud) -> float:
        """Median chordal distance from a cloud point to its nearest other point."""
        dist, _ = cloud.tree.query(cloud.embedded[:DIAMETER_POINTS], k=2)
        return float(np.median(dist[:, 1]))

    @classmethod
    def radius_window(cls, cloud: SampleCloud) -> Tuple[float, float]:
        """Radii a ball-mass fit can resolve: above the sampling scale, below the support size."""
        return (
            settings.RADIUS_WINDOW_NN_FACTOR * cls.nearest_neighbour_scale(cloud),
            settings.RADIUS_WINDOW_DIAMETER_FRACTION * cls.support_diameter(cloud),
        )

    @staticmethod
    def young_deviation(schedule: RadiiSchedule) -> List[float]:
        """|log rho_{n+1} / log rho_n - 1| for consecutive radii."""
        logs = np.log(schedule.radii)
        return [float(v) for v in np.abs(logs[1:] / logs[:-1] - 1.0)]

    @classmethod
    def young_ok(cls, schedule: RadiiSchedule) -> bool:
        dev = cls.young_deviation(schedule)
        if not dev:
            return False
        return bool(dev[-1] <= settings.YOUNG_TAIL_TOL and np.all(np.diff(dev) <= 0))

    # ------------------------------------------------------------------
    # local slopes
    # ------------------------------------------------------------------

    @staticmethod
    def _ball_counts(cloud: SampleCloud, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
        """(n_centers, n_radii) point counts in chordal balls."""
        E = embed(normalize(np.atleast_2d(centers)))
        queries = np.repeat(E, len(radii), axis=0)
        r = np.tile(radii, len(E))
        hits = cloud.tree.query_ball_point(queries, r, return_length=True)
        return np.asarray(hits, dtype=float).reshape(len(E), len(radii))

    @staticmethod
    def _slope_from_counts(counts: np.ndarray, radii: np.ndarray, total: int) -> LocalDimension:
        keep = counts >= settings.MIN_BALL_COUNT
        if keep.sum() < settings.MIN_FIT_RADII:
            raise InsufficientMass(
                f"only {int(keep.sum())} radii hold >= {settings.MIN_BALL_COUNT} points"
            )
        return _fit(np.log(radii[keep]), np.log(counts[keep] / total))

    @classmethod
    def local_dimension_at(
        cls,
        cloud: SampleCloud,
        x: Union[ProjectivePoint, np.ndarray],
        schedule: Optional[RadiiSchedule] = None,
        leave_one_out: bool = False,
    ) -> LocalDimension:
        """Slope of log mu(B(x, rho_n)) against log rho_n; leave_one_out drops x itself from the counts."""
        schedule = schedule or cls.default_schedule(cloud)
        coords = x.coords if isinstance(x, ProjectivePoint) else np.asarray(x)
        radii = schedule.radii
        counts = cls._ball_counts(cloud, coords, radii)[0]
        total = cloud.count
        if leave_one_out:
            counts = np.maximum(counts - 1.0, 0.0)
            total -= 1
        local = cls._slope_from_counts(counts, radii, total)
        lo, hi = cls.radius_window(cloud)
        outside = int(np.sum((radii < lo) | (radii > hi)))
        if outside:
            logger.warning(
                f"{cloud.map_id}: {outside}/{len(radii)} radii outside the resolvable window [{lo:.2e}, {hi:.2e}]"
            )
        return local.model_copy(update={"radii_outside_window": outside})

    @staticmethod
    def _bootstrap_ci(values: np.ndarray, rng: np.random.Generator) -> Tuple[float, float]:
        idx = rng.integers(0, len(values), size=(settings.BOOTSTRAP_RESAMPLES, len(values)))
        medians = np.median(values[idx], axis=1)
        tail = 100.0 * (1.0 - settings.CI_LEVEL) / 2.0
        lo, hi = np.percentile(medians, [tail, 100.0 - tail])
        return float(lo), float(hi)

    # ------------------------------------------------------------------
    # estimators
    # ------------------------------------------------------------------

    @classmethod
    def _local_slope(cls, cloud: SampleCloud, n_centers: int, schedule: RadiiSchedule) -> DimensionEstimate:
        radii = schedule.radii
        centers = cloud.points[:n_centers]
        counts = np.maximum(cls._ball_counts(cloud, centers, radii) - 1.0, 0.0)
        slopes: List[float] = []
        dropped = 0
        for row in counts:
            try:
                slopes.append(cls._slope_from_counts(row, radii, cloud.count - 1).slope)
            except InsufficientMass:
                dropped += 1
        if dropped > settings.MAX_DROPPED_CENTERS * len(centers) or not slopes:
            raise DimensionEstimateFailed(f"{cloud.map_id}: {dropped}/{len(centers)} centers dropped")
        if dropped:
            logger.info(f"{cloud.map_id}: dropped {dropped}/{len(centers)} isolated centers")
        values = np.array(slopes)
        dim_hat = float(np.median(values))
        lo, hi = cls._bootstrap_ci(values, stream(cloud.rng_seed, "bootstrap"))
        return DimensionEstimate(
            map_id=cloud.map_id,
            method=DimensionMethod.LOCAL_SLOPE,
            dim_hat=dim_hat,
            ci=(min(lo, dim_hat), max(hi, dim_hat)),
            local_dims=[float(v) for v in values],
            radii_schedule=schedule,
            reference_count=cloud.count,
            n_centers=len(centers),
            dropped=dropped,
        )

    @staticmethod
    def _correlation(cloud: SampleCloud, schedule: RadiiSchedule) -> DimensionEstimate:
        """Slope of the pair-correlation integral C(r) = #{i != j : d(x_i, x_j) <= r} / N(N-1)."""
        radii = schedule.radii[::-1]
        N = cloud.count
        pairs = cloud.tree.count_neighbors(cloud.tree, radii) - N
        # mean neighbour count at least MIN_BALL_COUNT
        keep = pairs >= settings.MIN_BALL_COUNT * N
        if keep.sum() < settings.MIN_FIT_RADII:
            raise DimensionEstimateFailed(f"{cloud.map_id}: pair counts too small for a correlation fit")
        fit = _fit(np.log(radii[keep]), np.log(pairs[keep] / (N * (N - 1.0))))
        half = _z_value() * fit.stderr
        return DimensionEstimate(
            map_id=cloud.map_id,
            method=DimensionMethod.CORRELATION,
            dim_hat=fit.slope,
            ci=(fit.slope - half, fit.slope + half),
            radii_schedule=schedule,
            reference_count=N,
        )

    @staticmethod
    def box_counts(cloud: SampleCloud, sizes: np.ndarray) -> np.ndarray:
        """Occupied grid cells of side delta in the embedding, minimized over shifted grids."""
        E = cloud.embedded
        out = np.zeros(len(sizes))
        for i, delta in enumerate(sizes):
            best = np.inf
            for j in range(BOX_OFFSETS):
                cells = np.floor(E / delta + j / BOX_OFFSETS).astype(np.int64)
                best = min(best, len(np.unique(cells, axis=0)))
            out[i] = best
        return out

    @classmethod
    def _box_count(cls, cloud: SampleCloud, schedule: RadiiSchedule) -> DimensionEstimate:
        sizes = schedule.radii
        counts = cls.box_counts(cloud, sizes)
        keep = (counts >= MIN_BOX_COUNT) & (counts <= cloud.count / 5.0)
        if keep.sum() < settings.MIN_FIT_RADII:
            raise DimensionEstimateFailed(f"{cloud.map_id}: box counts out of range at every scale")
        fit = stats.linregress(-np.log(sizes[keep]), np.log(counts[keep]))
        half = _z_value() * float(fit.stderr)
        slope = float(fit.slope)
        return DimensionEstimate(
            map_id=cloud.map_id,
            method=DimensionMethod.BOX_COUNT,
            dim_hat=slope,
            ci=(slope - half, slope + half),
            radii_schedule=schedule,
            reference_count=cloud.count,
        )

    @classmethod
    def aggregate_dimension(
        cls,
        cloud: SampleCloud,
        n_centers: Optional[int] = None,
        schedule: Optional[RadiiSchedule] = None,
        method: Union[DimensionMethod, str] = DimensionMethod.LOCAL_SLOPE,
    ) -> DimensionEstimate:
        n_centers = n_centers or settings.DIMENSION_CENTERS
        if n_centers < 50:
            raise ValueError("n_centers must be >= 50")
        n_centers = min(n_centers, cloud.count)
        schedule = schedule or cls.default_schedule(cloud)
        method = DimensionMethod(method)
        if method == DimensionMethod.LOCAL_SLOPE:
            est = cls._local_slope(cloud, n_centers, schedule)
        elif method == DimensionMethod.CORRELATION:
            est = cls._correlation(cloud, schedule)
        else:
            est = cls._box_count(cloud, schedule)
        young = cls.young_ok(schedule)
        if not young:
            logger.warning(f"{cloud.map_id}: radii schedule fails the ratio condition at its tail")
        dim_hat = float(np.clip(est.dim_hat, 0.0, 2.0 * cloud.k))
        ci = (min(est.ci[0], dim_hat), max(est.ci[1], dim_hat))
        est = est.model_copy(update={"dim_hat": dim_hat, "ci": ci, "young_ok": young})
        logger.info(f"{cloud.map_id}: {method.value} dimension {dim_hat:.4f} ci=({est.ci[0]:.4f}, {est.ci[1]:.4f})")
        return est

    @classmethod
    def mass_curves(
        cls,
        cloud: SampleCloud,
        centers: np.ndarray,
        schedule: Optional[RadiiSchedule] = None,
    ) -> List[Tuple[int, float, float]]:
        """Plot rows (center index, log rho, log mass) for every nonzero ball mass."""
        schedule = schedule or cls.default_schedule(cloud)
        radii = schedule.radii
        counts = cls._ball_counts(cloud, centers, radii)
        rows = []
        for i, row in enumerate(counts):
            for rho, c in zip(radii, row):
                if c > 0:
                    rows.append((i, float(np.log(rho)), float(np.log(c / cloud.count))))
        return rows
