"""Lyapunov exponents along the equilibrium measure."""

from __future__ import annotations

import logging
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from app.core.config import get_settings
from app.core.exceptions import InsufficientSamples, TooManyDiscards
from app.core.parallel import chunk_ranges, map_chunks
from app.lyapunov.models import (
    ExponentInequalityReport,
    JacobianSum,
    LogIntegrabilityReport,
    LyapunovEstimate,
    SumConsistencyReport,
)
from app.maps.models import MapModel
from app.maps.service import MapService
from app.sampler.models import SampleCloud

logger = logging.getLogger(__name__)
settings = get_settings()

# equality cases (z^2, Lattes) sit exactly on the inequality
ROUNDOFF = 1e-9


def batch_means_stderr(values: np.ndarray, batches: Optional[int] = None) -> np.ndarray:
    """Standard error of the mean from contiguous batch means (index order)."""
    values = np.asarray(values, dtype=float)
    b = min(batches or settings.BATCH_MEANS, len(values))
    if b < 2:
        return np.zeros(values.shape[1:]) if values.ndim > 1 else np.array(0.0)
    means = np.stack([chunk.mean(axis=0) for chunk in np.array_split(values, b)])
    return means.std(axis=0, ddof=1) / np.sqrt(b)


class LyapunovService:
    @staticmethod
    def _cocycle_chunk(fmap: MapModel, X: np.ndarray, block_len: int) -> Tuple[np.ndarray, np.ndarray]:
        """Sum of log |diag R| along N steps for each start, and a validity mask."""
        n, k = len(X), fmap.k
        Q = np.broadcast_to(np.eye(k, dtype=complex), (n, k, k)).copy()
        logs = np.zeros((n, k))
        ok = np.ones(n, dtype=bool)
        cur = X
        for _ in range(block_len):
            M, fnorm = MapService.tangent_matrices(fmap, cur)
            jac = np.abs(np.linalg.det(M)) ** 2
            ok &= (fnorm > 0) & (jac >= settings.CRITICAL_JACOBIAN_FLOOR)
            Q, R = np.linalg.qr(M @ Q)
            diag = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
            with np.errstate(divide="ignore"):
                logs += np.where(ok[:, None], np.log(np.where(diag > 0, diag, 1.0)), 0.0)
            cur, vanish = MapService.image(fmap, cur)
            ok &= ~vanish
        return logs, ok

    @classmethod
    def cocycle_spectrum(
        cls,
        fmap: MapModel,
        cloud: SampleCloud,
        block_len: int = 20,
        workers: Optional[int] = None,
    ) -> LyapunovEstimate:
        """Exponents from (1/N) log |diag R| of the QR-triangularized cocycle over N steps."""
        if cloud.count < settings.MIN_LYAPUNOV_SAMPLES:
            raise InsufficientSamples(
                f"{fmap.id}: {cloud.count} samples, need {settings.MIN_LYAPUNOV_SAMPLES}"
            )
        if block_len < 1:
            raise ValueError("block_len must be >= 1")

        def run(bounds):
            lo, hi = bounds
            return cls._cocycle_chunk(fmap, cloud.points[lo:hi], block_len)

        parts = map_chunks(run, chunk_ranges(cloud.count), workers)
        logs = np.concatenate([p[0] for p in parts]) / block_len
        ok = np.concatenate([p[1] for p in parts])
        discards = int((~ok).sum())
        if discards > settings.MAX_SEGMENT_DISCARD_FRACTION * cloud.count:
            raise TooManyDiscards(f"{fmap.id}: {discards}/{cloud.count} segments hit near-critical points")
        flags = []
        if discards > 0.01 * cloud.count:
            logger.warning(f"{fmap.id}: {discards} cocycle segments discarded near the critical set")
            flags.append("discards_above_1pct")
        vals = logs[ok]
        means = vals.mean(axis=0)
        order = np.argsort(means, kind="stable")
        stderr = np.atleast_1d(batch_means_stderr(vals))[order]
        sigma_err = float(batch_means_stderr(vals.sum(axis=1)))
        est = LyapunovEstimate(
            map_id=fmap.id,
            chi=[float(v) for v in means[order]],
            sigma=float(np.sum(means)),
            stderr=[float(v) for v in stderr],
            sigma_stderr=sigma_err,
            n_cocycle=block_len,
            n_samples=int(ok.sum()),
            discards=discards,
            eps0=settings.EPS0,
            flags=flags,
        )
        logger.info(f"{fmap.id}: N={block_len} chi={est.chi} sigma={est.sigma:.5f} (+/- {sigma_err:.1e})")
        return est

    @classmethod
    def exponent_spectrum_by_block(
        cls,
        fmap: MapModel,
        cloud: SampleCloud,
        block_lengths: Optional[Sequence[int]] = None,
        workers: Optional[int] = None,
    ) -> Dict[int, LyapunovEstimate]:
        lengths = block_lengths or settings.BLOCK_LENGTHS
        return {int(n): cls.cocycle_spectrum(fmap, cloud, int(n), workers) for n in lengths}

    @staticmethod
    def sum_exponents_from_jacobian(fmap: MapModel, cloud: SampleCloud) -> JacobianSum:
        """(1/2) mean log Jac f over the cloud; exact critical hits are dropped and counted."""
        if cloud.count < settings.MIN_LYAPUNOV_SAMPLES:
            raise InsufficientSamples(
                f"{fmap.id}: {cloud.count} samples, need {settings.MIN_LYAPUNOV_SAMPLES}"
            )
        jac = MapService.jacobians(fmap, cloud.points)
        valid = np.isfinite(jac) & (jac > 0)
        half_logs = 0.5 * np.log(jac[valid])
        return JacobianSum(
            map_id=fmap.id,
            value=float(half_logs.mean()),
            stderr=float(batch_means_stderr(half_logs)),
            n_used=int(valid.sum()),
            discards=int((~valid).sum()),
        )

    @staticmethod
    def sum_consistency_check(est: LyapunovEstimate, jac: JacobianSum) -> SumConsistencyReport:
        """|sum chi - Sigma_jac| <= 3 x combined standard error."""
        if est.map_id != jac.map_id:
            raise ValueError(f"estimates from {est.map_id} and {jac.map_id} cannot be compared")
        difference = abs(est.sigma - jac.value)
        tolerance = 3.0 * float(np.hypot(est.sigma_stderr, jac.stderr))
        report = SumConsistencyReport(
            map_id=est.map_id,
            sigma_cocycle=est.sigma,
            sigma_jacobian=jac.value,
            difference=float(difference),
            tolerance=tolerance,
            sum_consistent=bool(difference <= tolerance + ROUNDOFF),
        )
        if not report.sum_consistent:
            logger.warning(
                f"{est.map_id}: cocycle sum {est.sigma:.6f} and Jacobian sum {jac.value:.6f} "
                f"differ by {difference:.2e} (tolerance {tolerance:.2e})"
            )
        return report

    @staticmethod
    def exponent_inequality_check(fmap: MapModel, est: LyapunovEstimate) -> ExponentInequalityReport:
        bound = 0.5 * np.log(fmap.d_t / fmap.lambda_k_minus_1)
        log_dt = float(np.log(fmap.d_t))
        chi1 = est.chi[0]
        two_sigma = 2.0 * est.sigma
        chi1_ok = chi1 >= bound - 3.0 * est.stderr[0] - ROUNDOFF
        sigma_ok = two_sigma >= log_dt - 3.0 * 2.0 * est.sigma_stderr - ROUNDOFF
        report = ExponentInequalityReport(
            map_id=fmap.id,
            chi1=chi1,
            chi1_bound=float(bound),
            chi1_margin=float(chi1 - bound),
            chi1_ok=bool(chi1_ok),
            two_sigma=two_sigma,
            log_d_t=log_dt,
            two_sigma_margin=float(two_sigma - log_dt),
            two_sigma_ok=bool(sigma_ok),
        )
        if not report.ok:
            logger.warning(f"{fmap.id}: exponent inequalities fail ({report.model_dump()})")
        return report

    @staticmethod
    def log_integrability_check(fmap: MapModel, cloud: SampleCloud) -> LogIntegrabilityReport:
        dist = MapService.distances_to_J(fmap, cloud.points)
        zero = dist <= 0
        logs = np.abs(np.log(np.where(zero, 1.0, dist)))
        half = logs[: max(len(logs) // 2, 1)]
        full_mean = float(logs.mean())
        half_mean = float(half.mean())
        change = abs(full_mean - half_mean) / max(full_mean, 1e-12)
        return LogIntegrabilityReport(
            map_id=fmap.id,
            mean_full=full_mean,
            mean_half=half_mean,
            relative_change=change,
            zero_distances=int(zero.sum()),
            ok=bool(np.isfinite(full_mean) and change < 0.1 and not zero.any()),
        )
