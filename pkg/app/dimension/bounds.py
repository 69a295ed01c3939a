"""Dimension bounds from the topological degree and the Lyapunov exponents, and the verdict."""

from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np

from app.core.config import get_settings
from app.core.exceptions import ConfigError, HypothesisViolation
from app.dimension.models import BoundsVerdict, DimensionEstimate, TheoremBounds
from app.lyapunov.models import LyapunovEstimate
from app.maps.models import MapModel

logger = logging.getLogger(__name__)
settings = get_settings()

# equality cases (z^2, Lattes) sit exactly on the inequality
ROUNDOFF = 1e-9


def alpha_eps(k: int, d_t: int, sigma: float, chi_k: float, eps: float, rho: float = 0.0, eps0: float = 0.0) -> float:
    """Covering exponent 2k - (2 Sigma - log d_t - 2k rho eps) / (chi_k (1 + eps0) + (rho + 2) eps)."""
    num = 2.0 * sigma - np.log(d_t) - 2.0 * k * rho * eps
    den = chi_k * (1.0 + eps0) + (rho + 2.0) * eps
    return float(2.0 * k - num / den)


def theorem_bounds(
    k: int,
    d_t: int,
    sigma: float,
    chi_k: float,
    sigma_stderr: float = 0.0,
    rho: float = 0.0,
    eps_grid: Optional[Sequence[float]] = None,
) -> TheoremBounds:
    """log d_t / chi_k <= dim <= 2k - (2 Sigma - log d_t) / chi_k."""
    if d_t < 2:
        raise HypothesisViolation(f"topological degree {d_t} < 2")
    if not chi_k > 0:
        raise HypothesisViolation(f"largest exponent {chi_k} is not positive")
    log_dt = float(np.log(d_t))
    two_sigma = 2.0 * sigma
    if two_sigma < log_dt - 3.0 * 2.0 * sigma_stderr - ROUNDOFF:
        raise HypothesisViolation(f"2 Sigma = {two_sigma:.5f} below log d_t = {log_dt:.5f}")
    grid = settings.ALPHA_EPS_GRID if eps_grid is None else eps_grid
    return TheoremBounds(
        k=k,
        d_t=d_t,
        sigma=sigma,
        chi_k=chi_k,
        lower=log_dt / chi_k,
        upper=2.0 * k - (two_sigma - log_dt) / chi_k,
        rho=rho,
        alpha_eps_curve=[(float(e), alpha_eps(k, d_t, sigma, chi_k, float(e), rho)) for e in grid],
    )


def propagated_stderr(d_t: int, sigma: float, chi_k: float, sigma_stderr: float, chi_stderr: float) -> float:
    """Delta-method standard error of the larger of the two bounds."""
    log_dt = np.log(d_t)
    se_lower = log_dt * chi_stderr / chi_k**2
    se_upper = np.hypot(2.0 * sigma_stderr / chi_k, (2.0 * sigma - log_dt) * chi_stderr / chi_k**2)
    return float(max(se_lower, se_upper))


def verify_theorem(
    fmap: MapModel,
    lyap: LyapunovEstimate,
    dim: DimensionEstimate,
    rho_hat: float = 0.0,
) -> BoundsVerdict:
    if lyap.map_id != fmap.id or dim.map_id != fmap.id:
        raise ConfigError(f"estimates from {lyap.map_id}/{dim.map_id} do not belong to {fmap.id}")
    bounds = theorem_bounds(fmap.k, fmap.d_t, lyap.sigma, lyap.chi_k, lyap.sigma_stderr, rho_hat)
    se = propagated_stderr(fmap.d_t, lyap.sigma, lyap.chi_k, lyap.sigma_stderr, lyap.stderr[-1])
    slack = max(dim.half_width, 3.0 * se, settings.VERDICT_MIN_SLACK)
    verdict = BoundsVerdict(
        map_id=fmap.id,
        lower=bounds.lower,
        upper=bounds.upper,
        dim_hat=dim.dim_hat,
        slack=slack,
        pass_lower=bool(dim.dim_hat >= bounds.lower - slack),
        pass_upper=bool(dim.dim_hat <= bounds.upper + slack),
        alpha_eps_curve=bounds.alpha_eps_curve,
        provenance={
            "k": fmap.k,
            "d_t": fmap.d_t,
            "chi": lyap.chi,
            "sigma": lyap.sigma,
            "sigma_stderr": lyap.sigma_stderr,
            "chi_stderr": lyap.stderr,
            "n_cocycle": lyap.n_cocycle,
            "n_samples": lyap.n_samples,
            "method": dim.method.value,
            "ci": list(dim.ci),
            "reference_count": dim.reference_count,
            "rho_hat": rho_hat,
        },
    )
    log = logger.info if verdict.passed else logger.warning
    log(
        f"{fmap.id}: bounds [{verdict.lower:.4f}, {verdict.upper:.4f}] dim_hat {verdict.dim_hat:.4f} "
        f"slack {slack:.4f} -> lower {'pass' if verdict.pass_lower else 'FAIL'}, upper {'pass' if verdict.pass_upper else 'FAIL'}"
    )
    return verdict
