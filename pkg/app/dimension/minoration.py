"""Ball-mass minoration along certified orbits: mu(B(x_0, sigma delta_n)) <= d_t^-n."""

from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np

from app.branches.models import InverseBranchCertificate
from app.core.config import get_settings
from app.core.exceptions import InsufficientSamples
from app.core.projective import embed
from app.dimension.models import MinorationReport
from app.lyapunov.models import LyapunovEstimate
from app.maps.models import MapModel
from app.sampler.models import BackwardOrbit, SampleCloud
from app.sampler.service import SamplerService

logger = logging.getLogger(__name__)
settings = get_settings()


def shrink_radii(chi_k: float, eps: float, rho_hat: float, depths: np.ndarray) -> np.ndarray:
    """delta_n = e^{-n(chi_k + eps)} e^{-n(rho + 1) eps}."""
    return np.exp(-depths * (chi_k + eps)) * np.exp(-depths * (rho_hat + 1.0) * eps)


def minoration_check(
    fmap: MapModel,
    cloud: SampleCloud,
    orbits: Sequence[BackwardOrbit],
    certificates: Sequence[InverseBranchCertificate],
    lyap: LyapunovEstimate,
    eps: Optional[float] = None,
    max_depth: Optional[int] = None,
) -> MinorationReport:
    """Calibrate sigma_hat on the first half of the certified orbits, test the bound on the second half."""
    by_ref = {c.orbit_ref: c for c in certificates}
    used = [o for o in orbits if o.orbit_id in by_ref and by_ref[o.orbit_id].max_certified_depth > 0]
    if len(used) < 2:
        raise InsufficientSamples(f"{fmap.id}: {len(used)} certified orbits, need at least 2")
    certs = [by_ref[o.orbit_id] for o in used]
    eps = float(eps if eps is not None else certs[0].eps)
    rho_hat = max(c.rho_hat for c in certs)
    N = cloud.count

    top = min(max_depth or settings.MINORATION_MAX_DEPTH, settings.MINORATION_MAX_DEPTH)
    depths = np.array([n for n in range(1, top + 1) if N * float(fmap.d_t) ** -n >= 1.0])
    if len(depths) == 0:
        raise InsufficientSamples(f"{fmap.id}: cloud of {N} points cannot resolve mass 1/d_t")
    p = float(fmap.d_t) ** -depths.astype(float)
    delta = shrink_radii(lyap.chi_k, eps, rho_hat, depths)

    half = len(used) // 2
    train, test = used[:half], used[half:]
    ranks = np.floor(p * N).astype(int) + 1
    X_train = embed(np.stack([o.points[0] for o in train]))
    dist, _ = cloud.tree.query(X_train, k=int(ranks.max()))
    dist = np.atleast_2d(dist).reshape(len(train), -1)
    # radius at which the ball first holds more than floor(pN) points
    limiting = dist[:, ranks - 1]
    sigma_hat = float(np.min(limiting / delta[None, :]) * (1.0 - 1e-9))

    X_test = np.stack([o.points[0] for o in test])
    masses = np.stack([SamplerService.ball_masses(cloud, X_test, sigma_hat * d) for d in delta], axis=1)
    bound = p + 5.0 * np.sqrt(p * (1.0 - p) / N)
    violations = int(np.sum(masses > bound[None, :]))
    report = MinorationReport(
        map_id=fmap.id,
        sigma_hat=sigma_hat,
        eps=eps,
        rho_hat=rho_hat,
        depths=[int(n) for n in depths],
        delta=[float(d) for d in delta],
        bound=[float(b) for b in bound],
        max_test_mass=[float(m) for m in masses.max(axis=0)],
        n_train=len(train),
        n_test=len(test),
        violations=violations,
        ok=violations == 0,
        note=None if len(depths) == top else f"depths limited to {int(depths[-1])} by cloud size",
    )
    logger.info(f"{fmap.id}: minoration sigma_hat={sigma_hat:.4g}, {violations} violations over {len(test)} test orbits")
    return report
