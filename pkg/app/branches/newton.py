"""Damped Newton solver for local inverse branches: find w near w0 with f(w) = p."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.core.config import get_settings
from app.core.projective import chordal, normalize
from app.maps.models import MapModel
from app.maps.service import MapService

settings = get_settings()

DAMPING_STEPS = (1.0, 0.5, 0.25, 0.125)


@dataclass(frozen=True)
class NewtonResult:
    points: np.ndarray  # (n, k+1) normalized
    residual: np.ndarray  # chordal dist(f(w), p)
    iterations: int

    @property
    def converged(self) -> np.ndarray:
        return self.residual <= settings.PREIMAGE_RESIDUAL_TOL


def _others(idx: np.ndarray, width: int) -> np.ndarray:
    table = np.array([[j for j in range(width) if j != c] for c in range(width)])
    return table[idx]


def _residual(fmap: MapModel, W: np.ndarray, P: np.ndarray) -> np.ndarray:
    F = MapService.components(fmap, W)
    size = np.linalg.norm(F, axis=-1)
    out = np.full(len(W), np.inf)
    ok = (size > 0) & np.all(np.isfinite(W), axis=-1)
    if np.any(ok):
        out[ok] = chordal(F[ok], P[ok])
    return out


def newton_branch(
    fmap: MapModel,
    start: np.ndarray,
    targets: np.ndarray,
    max_iter: Optional[int] = None,
) -> NewtonResult:
    """Solve F_l(w) p_j - F_j(w) p_l = 0 (j != l, l the chart of p) in the chart of w0.

    start is one point (k+1,) or one per target. A step that increases the
    residual is halved, down to 1/8.
    """
    max_iter = max_iter or settings.NEWTON_MAX_ITER
    P = normalize(np.atleast_2d(targets))
    n, width = P.shape
    W = normalize(np.broadcast_to(np.asarray(start, dtype=complex), (n, width)).copy())
    rows = np.arange(n)
    c = np.argmax(np.abs(W), axis=1)
    l = np.argmax(np.abs(P), axis=1)
    free = _others(c, width)  # unknowns
    eqs = _others(l, width)  # equation indices j
    p_l = P[rows, l]
    p_j = np.take_along_axis(P, eqs, axis=1)
    res = _residual(fmap, W, P)
    it = 0
    for it in range(1, max_iter + 1):
        active = res > settings.NEWTON_CONVERGED_TOL
        if not np.any(active):
            break
        F = MapService.components(fmap, W)
        DF = MapService.jacobian_matrix(fmap, W)
        F_l = F[rows, l]
        F_j = np.take_along_axis(F, eqs, axis=1)
        R = F_l[:, None] * p_j - F_j * p_l[:, None]  # (n, k)
        DF_l = np.take_along_axis(DF[rows, l], free, axis=1)  # (n, k)
        DF_j = np.take_along_axis(np.take_along_axis(DF, eqs[:, :, None], axis=1), free[:, None, :], axis=2)
        J = DF_l[:, None, :] * p_j[:, :, None] - DF_j * p_l[:, None, None]
        step = np.einsum("nab,nb->na", np.linalg.pinv(J), R)
        best_W, best_res = W.copy(), res.copy()
        for lam in DAMPING_STEPS:
            trial = W.copy()
            np.put_along_axis(trial, free, np.take_along_axis(W, free, axis=1) - lam * step, axis=1)
            trial_res = _residual(fmap, trial, P)
            better = active & (trial_res < best_res) & (best_res == res)
            best_W[better] = trial[better]
            best_res[better] = trial_res[better]
        if np.all(best_res[active] >= res[active]):
            break
        W, res = best_W, best_res
    return NewtonResult(points=normalize(W), residual=res, iterations=it)
