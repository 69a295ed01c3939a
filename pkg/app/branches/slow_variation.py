"""Envelope checks for products of an observable along a backward orbit."""

from __future__ import annotations

import logging
from typing import Callable, Optional, Union

import numpy as np
from scipy import stats

from app.branches.models import SlowFunctionCheck, USelector
from app.core.config import get_settings
from app.core.exceptions import NonIntegrable
from app.maps.models import MapModel
from app.maps.service import MapService
from app.sampler.models import BackwardOrbit

logger = logging.getLogger(__name__)
settings = get_settings()

Observable = Callable[[np.ndarray], np.ndarray]

# running sums of |log u| growing faster than n^1.5 are treated as non-integrable
MAX_GROWTH_EXPONENT = 1.5


def observable(fmap: MapModel, selector: Union[USelector, str, Observable]) -> tuple[str, Observable]:
    if callable(selector):
        return getattr(selector, "__name__", "custom"), selector
    sel = USelector(selector)
    if sel == USelector.DIST_TO_J:
        return sel.value, lambda X: MapService.distances_to_J(fmap, X)

    def derivative(X: np.ndarray) -> np.ndarray:
        data = MapService.derivative_data(fmap, X)
        if sel == USelector.OP_NORM:
            return data.op_norm
        if sel == USelector.INV_NORM:
            return data.inv_norm
        if sel == USelector.JACOBIAN:
            return data.jacobian
        return np.minimum.reduce([np.ones(len(X)), data.op_norm, data.inv_norm, data.jacobian])

    return sel.value, derivative


def _growth_exponent(log_u: np.ndarray) -> Optional[float]:
    running = np.cumsum(np.abs(log_u))
    n = np.arange(1, len(running) + 1)
    mask = running > 0
    if mask.sum() < 3:
        return None
    return float(stats.linregress(np.log(n[mask]), np.log(running[mask])).slope)


def _envelopes(partial: np.ndarray, n: np.ndarray, chi: float, eps: float) -> tuple[float, float]:
    """Smallest V2 >= 1 and largest V1 <= 1 with V1 e^{n(chi-eps)} <= prod <= V2 e^{n(chi+eps)}."""
    if len(partial) == 0:
        return 1.0, 1.0
    V2 = float(np.exp(max(0.0, np.max(partial - n * (chi + eps)))))
    V1 = float(np.exp(min(0.0, np.min(partial - n * (chi - eps)))))
    return V1, V2


def slow_variation_check(
    fmap: MapModel,
    orbit: BackwardOrbit,
    u_selector: Union[USelector, str, Observable] = USelector.DIST_TO_J,
    eps: Optional[float] = None,
    chi_hat: Optional[float] = None,
) -> SlowFunctionCheck:
    """Fit V1, V2 on the whole orbit; count breaches on the second half with V1, V2 frozen from the first."""
    eps = settings.BRANCH_EPS if eps is None else float(eps)
    name, u = observable(fmap, u_selector)
    values = np.asarray(u(orbit.points[1:]), dtype=float)
    if values.size and (np.any(~np.isfinite(values)) or np.any(values <= 0)):
        raise NonIntegrable(f"{orbit.orbit_id}: {name} is zero or non-finite along the orbit")
    log_u = np.log(values)
    growth = _growth_exponent(log_u)
    if growth is not None and growth > MAX_GROWTH_EXPONENT:
        raise NonIntegrable(f"{orbit.orbit_id}: running sum of |log {name}| grows like n^{growth:.2f}")

    chi = float(np.mean(log_u)) if chi_hat is None and log_u.size else float(chi_hat or 0.0)
    partial = np.cumsum(log_u)
    n = np.arange(1, len(partial) + 1)
    V1, V2 = _envelopes(partial, n, chi, eps)

    half = len(partial) // 2
    V1_train, V2_train = _envelopes(partial[:half], n[:half], chi, eps)
    test_p, test_n = partial[half:], n[half:]
    # tiny relative slack for round-off in the cumulative sums
    slack = 1e-12 * (1.0 + np.abs(test_p))
    violations = int(
        np.sum(test_p > np.log(V2_train) + test_n * (chi + eps) + slack)
        + np.sum(test_p < np.log(V1_train) + test_n * (chi - eps) - slack)
    )
    if violations:
        logger.info(f"{orbit.orbit_id}: {violations} envelope breaches for u={name} on the test half")
    return SlowFunctionCheck(
        selector=name,
        eps=eps,
        chi_hat=chi,
        V1_hat=V1,
        V2_hat=V2,
        violations=violations,
        depths_tested=len(partial),
        growth_exponent=growth,
    )
