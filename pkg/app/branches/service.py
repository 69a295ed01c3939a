"""Radius schedules and numerical certificates for inverse branches along backward orbits."""

from __future__ import annotations

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from app.branches.models import (
    CertificationSummary,
    DepthRecord,
    InverseBranchCertificate,
    RadiusSchedule,
    ScheduleEntry,
)
from app.branches.newton import newton_branch
from app.core.config import get_settings
from app.core.exceptions import OrbitTooCloseToJ, UnsupportedPreimages
from app.core.parallel import map_chunks
from app.core.projective import chordal, halton_ball, normalize, sample_ball
from app.core.rng import stream, stream_seed
from app.lyapunov.models import LyapunovEstimate
from app.maps.models import MapModel
from app.maps.service import MapService
from app.sampler.models import BackwardOrbit

logger = logging.getLogger(__name__)
settings = get_settings()

VOLUME_FIT_DEPTHS = (5, 20)


def held_out_bound(margins: np.ndarray, upper: bool, tol: float) -> Optional[bool]:
    """Constant fitted on the first half of the depths, then checked on the second half."""
    margins = np.asarray(margins, dtype=float)
    half = len(margins) // 2
    if half == 0:
        return None
    test = margins[half:]
    if upper:
        return bool(np.all(test <= np.max(margins[:half]) + tol))
    return bool(np.all(test >= np.min(margins[:half]) - tol))


def constant_C(eps: float) -> float:
    return max(np.exp(eps / 2.0), 1.0 / (1.0 - np.exp(-eps / 2.0))) * settings.BRANCH_C_SAFETY


def pull_back(fmap: MapModel, Y: np.ndarray, anchor: np.ndarray) -> np.ndarray:
    """Preimage of each row of Y closest to anchor (the local branch through anchor)."""
    try:
        allp = MapService.all_preimages_array(fmap, Y)
    except UnsupportedPreimages:
        return newton_branch(fmap, anchor, Y).points
    idx = np.argmin(chordal(allp, np.asarray(anchor)[None, None, :]), axis=1)
    return normalize(allp[np.arange(len(allp)), idx])


def _sup_terms(op: np.ndarray, inv: np.ndarray, second: np.ndarray) -> float:
    # |d^2 f^-1| <= |df^-1|^3 |d^2 f|
    return float(1.0 + np.max(op) + np.max(second) + np.max(inv) + np.max(inv**3 * second))


def _pair_ratios(src: np.ndarray, dst: np.ndarray) -> float:
    """max dist(dst_i, dst_j) / dist(src_i, src_j) over center pairs and consecutive pairs."""
    idx_a = np.concatenate([np.zeros(len(src) - 1, dtype=int), np.arange(1, len(src) - 1)])
    idx_b = np.concatenate([np.arange(1, len(src)), np.arange(2, len(src))])
    num = chordal(dst[idx_a], dst[idx_b])
    den = chordal(src[idx_a], src[idx_b])
    ok = den > 0
    if not np.any(ok):
        return 0.0
    return float(np.max(num[ok] / den[ok]))


class BranchService:
    # ------------------------------------------------------------------
    # schedule
    # ------------------------------------------------------------------

    @staticmethod
    def resolve_eps(eps: Optional[float], chi1_hat: Optional[float]) -> float:
        eps = float(eps if eps is not None else settings.BRANCH_EPS)
        if chi1_hat is not None and chi1_hat > 0 and eps > chi1_hat / 10.0:
            logger.warning(f"eps={eps} is not small against chi_1={chi1_hat:.4f}; clamping to {chi1_hat / 10.0:.4f}")
            eps = chi1_hat / 10.0
        return eps

    @classmethod
    def radius_schedule(
        cls,
        fmap: MapModel,
        orbit: BackwardOrbit,
        eps: Optional[float] = None,
        chi1_hat: Optional[float] = None,
    ) -> RadiusSchedule:
        """r_n = alpha_n A1 e^{-(n+1)eps} / (C M_n^{2k+1}) for n = 0 .. N-1."""
        eps = cls.resolve_eps(eps, chi1_hat)
        k, N = fmap.k, orbit.depth
        C = constant_C(eps)
        dist = MapService.distances_to_J(fmap, orbit.points)
        A1 = float(min(1.0, np.min(0.5 * dist * np.exp(np.arange(N + 1) * eps))))
        if A1 < settings.A1_FLOOR:
            raise OrbitTooCloseToJ(f"{orbit.orbit_id}: A1 = {A1:.2e} below {settings.A1_FLOOR:.0e}")
        if N == 0:
            return RadiusSchedule(orbit_id=orbit.orbit_id, eps=eps, A1_hat=A1, C=C)

        Y = orbit.points[1:]
        data = MapService.derivative_data(fmap, Y, with_second=True)
        alpha = np.minimum.reduce([np.ones(N), data.op_norm, data.inv_norm, data.jacobian])
        base = alpha * A1 * np.exp(-(np.arange(N) + 1) * eps) / C

        entries: List[ScheduleEntry] = []
        for n in range(N):
            m_center = _sup_terms(data.op_norm[n : n + 1], data.inv_norm[n : n + 1], data.second[n : n + 1])
            candidate = base[n] / m_center ** (2 * k + 1)
            probes = halton_ball(Y[n], 2.0 * candidate, settings.M_PROBES, seed=stream_seed(orbit.rng_seed, f"m-probes:{n}", orbit.index))
            pd = MapService.derivative_data(fmap, probes, with_second=True)
            M = max(
                m_center,
                _sup_terms(
                    np.concatenate([data.op_norm[n : n + 1], pd.op_norm]),
                    np.concatenate([data.inv_norm[n : n + 1], pd.inv_norm]),
                    np.concatenate([data.second[n : n + 1], pd.second]),
                ),
            )
            r_n = float(base[n] / M ** (2 * k + 1)) if np.isfinite(M) else 0.0
            entries.append(
                ScheduleEntry(
                    n=n,
                    r_n=r_n,
                    M_n_hat=float(M),
                    alpha_n=float(alpha[n]),
                    op_norm=float(data.op_norm[n]),
                    inv_norm=float(data.inv_norm[n]),
                    jacobian=float(data.jacobian[n]),
                    second=float(data.second[n]),
                    dist_J=float(dist[n]),
                )
            )
        return RadiusSchedule(orbit_id=orbit.orbit_id, eps=eps, A1_hat=A1, C=C, entries=entries)

    # ------------------------------------------------------------------
    # per-depth probes
    # ------------------------------------------------------------------

    @staticmethod
    def _probe_depth(fmap: MapModel, orbit: BackwardOrbit, entry: ScheduleEntry, eps: float) -> DepthRecord:
        n = entry.n
        if not entry.r_n > 0:
            return DepthRecord(**entry.model_dump())
        center, prev = orbit.points[n], orbit.points[n + 1]
        probes = halton_ball(center, entry.r_n, settings.BRANCH_PROBES, seed=stream_seed(orbit.rng_seed, f"branch-probes:{n}", orbit.index))
        pts = np.vstack([center[None, :], probes])
        sol = newton_branch(fmap, prev, pts)
        fields = entry.model_dump()
        newton_ok = bool(np.all(sol.converged)) and float(chordal(sol.points[0], prev)) <= settings.BRANCH_IDENTITY_TOL
        if not newton_ok:
            return DepthRecord(**fields, newton_ok=False, max_residual=float(np.max(sol.residual)))

        try:
            allp = MapService.all_preimages_array(fmap, pts)
            nearest = np.argmin(chordal(allp, prev[None, None, :]), axis=1)
            algebraic = allp[np.arange(len(pts)), nearest]
            unique_ok = bool(np.max(chordal(algebraic, sol.points)) <= settings.BRANCH_IDENTITY_TOL)
        except UnsupportedPreimages:
            unique_ok = True

        lip_g = _pair_ratios(pts, sol.points)
        lip_f = _pair_ratios(sol.points, pts)
        jac_min = float(np.min(MapService.jacobians(fmap, sol.points)))
        grow = np.exp(eps / 2.0)
        tol = settings.BRANCH_TOL
        bounds_ok = (
            lip_g <= entry.inv_norm * grow * (1.0 + tol)
            and lip_f <= entry.op_norm * grow * (1.0 + tol)
            and jac_min >= entry.jacobian / grow * (1.0 - tol)
        )
        return DepthRecord(
            **fields,
            lip_g=lip_g,
            lip_f=lip_f,
            jac_min=jac_min,
            newton_ok=True,
            unique_ok=unique_ok,
            max_residual=float(np.max(sol.residual)),
            passed=bool(unique_ok and bounds_ok),
        )

    # ------------------------------------------------------------------
    # composed branch
    # ------------------------------------------------------------------

    @staticmethod
    def _compose_newton(fmap: MapModel, orbit: BackwardOrbit, Y: np.ndarray, depth: int) -> np.ndarray:
        cur = Y
        for n in range(depth):
            cur = newton_branch(fmap, orbit.points[n + 1], cur).points
        return cur

    @classmethod
    def _composed_checks(
        cls,
        fmap: MapModel,
        orbit: BackwardOrbit,
        records: Sequence[DepthRecord],
        eps: float,
        C: float,
        chi_k: float,
    ) -> Tuple[float, float, bool]:
        """(r_hat, identity error of f^m after the composed branch, inclusion flag)."""
        m = len(records)
        pulled = np.cumprod([1.0] + [rec.inv_norm * np.exp(eps / 2.0) for rec in records[:-1]])
        r_hat = float(np.min([rec.r_n for rec in records] / pulled))
        x0 = orbit.points[0]

        probes = halton_ball(x0, r_hat, settings.INCLUSION_PROBES, seed=stream_seed(orbit.rng_seed, "composed", orbit.index))
        branch = cls._compose_newton(fmap, orbit, probes, m)
        identity_error = float(np.max(chordal(MapService.forward(fmap, branch, m), probes)))

        inner = r_hat / C * np.exp(-m * (chi_k * (1.0 + settings.EPS0) + eps))
        q = halton_ball(orbit.points[m], inner, settings.INCLUSION_PROBES, seed=stream_seed(orbit.rng_seed, "inclusion", orbit.index))
        y = MapService.forward(fmap, q, m)
        inside = chordal(y, x0[None, :]) < r_hat
        back = cls._compose_newton(fmap, orbit, y, m)
        inclusion_ok = bool(np.all(inside) and np.max(chordal(back, q)) <= settings.BRANCH_IDENTITY_TOL)
        return r_hat, identity_error, inclusion_ok

    @staticmethod
    def _image_volumes(fmap: MapModel, orbit: BackwardOrbit, radius: float, depth: int) -> np.ndarray:
        """log vol f^-n(B(x_0, radius)) for n = 1 .. depth, by Monte Carlo over the ball."""
        rng = stream(orbit.rng_seed, "volume", orbit.index)
        cur = sample_ball(orbit.points[0], radius, settings.VOLUME_SAMPLES, rng)
        log_jac = np.zeros(len(cur))
        log_vol = np.zeros(depth)
        base = 2 * fmap.k * np.log(radius)
        for n in range(depth):
            cur = pull_back(fmap, cur, orbit.points[n + 1])
            with np.errstate(divide="ignore"):
                log_jac += np.log(np.maximum(MapService.jacobians(fmap, cur), settings.CRITICAL_JACOBIAN_FLOOR))
            shift = np.min(log_jac)
            log_vol[n] = base - shift + np.log(np.mean(np.exp(-(log_jac - shift))))
        return log_vol

    # ------------------------------------------------------------------
    # certificate
    # ------------------------------------------------------------------

    @classmethod
    def certify_branches(
        cls,
        fmap: MapModel,
        orbit: BackwardOrbit,
        schedule: RadiusSchedule,
        chi_k: Optional[float] = None,
        sigma: Optional[float] = None,
    ) -> InverseBranchCertificate:
        """Probe every depth in order; the certificate stops at the first failing depth."""
        eps = schedule.eps
        records: List[DepthRecord] = []
        truncated: Optional[str] = None
        for entry in schedule.entries:
            rec = cls._probe_depth(fmap, orbit, entry, eps)
            records.append(rec)
            logger.debug(
                f"{orbit.orbit_id} n={entry.n} r={entry.r_n:.3e} lip_g={rec.lip_g:.4f} "
                f"lip_f={rec.lip_f:.4f} jac_min={rec.jac_min:.4f} pass={rec.passed}"
            )
            if not rec.passed:
                truncated = "newton_divergence" if not rec.newton_ok else "bound_failure"
                break
        passed = [r for r in records if r.passed]
        m = len(passed)
        cert = InverseBranchCertificate(
            orbit_ref=orbit.orbit_id,
            eps=eps,
            A1_hat=schedule.A1_hat,
            C=schedule.C,
            schedule=records,
            max_certified_depth=m,
            requested_depth=len(schedule.entries),
            truncated_reason=truncated,
        )
        if m == 0:
            return cert

        log_r = np.log([r.r_n for r in passed])
        depths = np.arange(m)
        slope = float(stats.linregress(depths, log_r).slope) if m >= 2 else 0.0
        rho_hat = max(0.0, -slope / (3.0 * eps))
        eta_margins = log_r + 3.0 * rho_hat * depths * eps
        eta_hat = float(np.exp(np.min(eta_margins)))
        log_tol = float(np.log1p(settings.BRANCH_TOL))
        eta_ok = held_out_bound(eta_margins, upper=False, tol=log_tol)

        if chi_k is None:
            chi_k = float(np.mean(np.log([r.op_norm for r in passed])))
        if sigma is None:
            sigma = float(0.5 * np.mean(np.log([r.jacobian for r in passed])))

        r_hat, identity_error, inclusion_ok = cls._composed_checks(fmap, orbit, passed, eps, schedule.C, chi_k)

        log_vol = cls._image_volumes(fmap, orbit, r_hat, m)
        steps = np.arange(1, m + 1)
        base = 2 * fmap.k * np.log(r_hat)
        kappa_margins = log_vol - base + steps * (2.0 * sigma - eps)
        kappa_hat = float(np.exp(np.max(kappa_margins)))
        kappa_ok = held_out_bound(kappa_margins, upper=True, tol=log_tol)
        lo, hi = VOLUME_FIT_DEPTHS
        if m <= lo:
            lo, hi = 0, m
        hi = min(hi, m)
        lv = np.concatenate([[base], log_vol])
        rate = float((lv[hi] - lv[lo]) / (hi - lo)) if hi > lo else None
        volume_ok = None if rate is None else bool(rate <= -(2.0 * sigma - eps) + settings.BRANCH_TOL)

        return cert.model_copy(
            update={
                "rho_hat": rho_hat,
                "eta_hat": eta_hat,
                "eta_ok": eta_ok,
                "r_hat": r_hat,
                "composed_identity_error": identity_error,
                "inclusion_ok": inclusion_ok,
                "kappa_hat": kappa_hat,
                "kappa_ok": kappa_ok,
                "volume_log_rate": rate,
                "volume_ok": volume_ok,
            }
        )

    @classmethod
    def certify_orbit(
        cls,
        fmap: MapModel,
        orbit: BackwardOrbit,
        eps: Optional[float] = None,
        lyap: Optional[LyapunovEstimate] = None,
    ) -> InverseBranchCertificate:
        chi1 = lyap.chi_1 if lyap is not None else None
        try:
            schedule = cls.radius_schedule(fmap, orbit, eps, chi1)
        except OrbitTooCloseToJ as e:
            logger.info(e.detail)
            eps_used = cls.resolve_eps(eps, chi1)
            return InverseBranchCertificate(
                orbit_ref=orbit.orbit_id,
                eps=eps_used,
                A1_hat=0.0,
                C=constant_C(eps_used),
                requested_depth=orbit.depth,
                truncated_reason="too_close_to_J",
            )
        return cls.certify_branches(
            fmap,
            orbit,
            schedule,
            chi_k=lyap.chi_k if lyap is not None else None,
            sigma=lyap.sigma if lyap is not None else None,
        )

    @classmethod
    def certify_orbits(
        cls,
        fmap: MapModel,
        orbits: Sequence[BackwardOrbit],
        eps: Optional[float] = None,
        lyap: Optional[LyapunovEstimate] = None,
        workers: Optional[int] = None,
    ) -> Tuple[List[InverseBranchCertificate], CertificationSummary]:
        """Certify many orbits and pool the slow-decay regression of log r_n."""
        certs = map_chunks(lambda orbit: cls.certify_orbit(fmap, orbit, eps, lyap), list(orbits), workers)
        depth = max((o.depth for o in orbits), default=0)
        full = sum(1 for c in certs if c.fully_certified)
        eps_used = certs[0].eps if certs else cls.resolve_eps(eps, None)

        # within-orbit demeaned regression: a weighted average of the per-orbit slopes
        sxy = sxx = 0.0
        for c in certs:
            rows = [r for r in c.schedule if r.passed]
            if len(rows) < 2:
                continue
            n = np.array([r.n for r in rows], dtype=float)
            y = np.log([r.r_n for r in rows])
            n -= n.mean()
            sxy += float(np.dot(n, y - y.mean()))
            sxx += float(np.dot(n, n))
        pooled = sxy / sxx if sxx > 0 else None
        rho_max = max((c.rho_hat for c in certs), default=0.0)
        slow_ok = pooled is None or pooled >= -3.0 * rho_max * eps_used * 1.1 - 1e-12
        errors = [c.composed_identity_error for c in certs if c.composed_identity_error is not None]

        summary = CertificationSummary(
            map_id=fmap.id,
            n_orbits=len(certs),
            depth=depth,
            eps=eps_used,
            n_full_depth=full,
            fraction_full_depth=full / len(certs) if certs else 0.0,
            too_close_to_J=sum(1 for c in certs if c.truncated_reason == "too_close_to_J"),
            pooled_slope=pooled,
            rho_max=rho_max,
            slow_decay_ok=bool(slow_ok),
            eta_failures=sum(1 for c in certs if c.eta_ok is False),
            kappa_failures=sum(1 for c in certs if c.kappa_ok is False),
            max_identity_error=max(errors) if errors else None,
        )
        logger.info(
            f"{fmap.id}: {full}/{len(certs)} orbits certified to depth {depth} "
            f"(pooled slope {pooled}, rho_max {rho_max:.3f})"
        )
        return certs, summary
