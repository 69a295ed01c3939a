"""Map service: evaluation, differentials, preimages and the exceptional set."""

from __future__ import annotations

import dataclasses
import logging
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import get_settings
from app.core.exceptions import (
    AllComponentsVanish,
    DegreeMismatch,
    RootSolverFailure,
    UnsupportedPreimages,
)
from app.core.projective import (
    ProjectivePoint,
    chordal,
    cluster,
    normalize,
    random_points,
    tangent_frame,
    unit,
)
from app.core.rng import stream
from app.maps.models import DegreeReport, DerivativeData, MapKind, MapModel, TangentMatrix
from app.maps.polynomials import (
    HomogeneousPolynomial,
    batched_binary_roots,
    binary_roots,
    determinant,
    sylvester_matrix,
)

logger = logging.getLogger(__name__)
settings = get_settings()


# ==================== structure helpers (cached per map object) ====================


@lru_cache(maxsize=64)
def _dense_pair(fmap: MapModel) -> Tuple[np.ndarray, np.ndarray]:
    """Dense ascending-in-z coefficients of [P : Q], padded to degree d."""
    out = []
    for comp in fmap.components:
        dense = np.zeros(fmap.degree + 1, dtype=complex)
        for (a, _), coeff in comp.terms.items():
            dense[a] += coeff
        out.append(dense)
    return out[0], out[1]


def _powers(z: np.ndarray, d: int) -> np.ndarray:
    """z^0 .. z^d along a new last axis."""
    out = np.ones(z.shape + (d + 1,), dtype=complex)
    for e in range(1, d + 1):
        out[..., e] = out[..., e - 1] * z
    return out


@lru_cache(maxsize=64)
def _diagonal_coefficients(fmap: MapModel) -> Optional[np.ndarray]:
    """c_i when F_i = c_i x_i^d for every i, else None."""
    coeffs = []
    for i, comp in enumerate(fmap.components):
        terms = comp.terms
        target = tuple(fmap.degree if j == i else 0 for j in range(fmap.nvars))
        if set(terms) != {target}:
            return None
        coeffs.append(terms[target])
    return np.array(coeffs, dtype=complex)


@lru_cache(maxsize=64)
def _skew_parts(fmap: MapModel) -> Optional[Tuple[np.ndarray, np.ndarray, complex]]:
    """For [p(z,t) : q(z,w,t) : c t^d]: dense p in (z,t), q as w-coefficient table, c."""
    d = fmap.degree
    p, q, r = fmap.components
    if set(r.terms) != {(0, 0, d)}:
        return None
    if any(e[1] != 0 for e in p.terms):
        return None
    pc = np.zeros(d + 1, dtype=complex)
    for (a, _, _), coeff in p.terms.items():
        pc[a] += coeff
    # q_table[j, a]: coefficient of z^a w^j t^(d-a-j)
    q_table = np.zeros((d + 1, d + 1), dtype=complex)
    for (a, j, _), coeff in q.terms.items():
        q_table[j, a] += coeff
    if q_table[d, 0] == 0 or pc[d] == 0:
        return None
    return pc, q_table, r.terms[(0, 0, d)]


class MapService:
    """Pure operations on MapModel; safe to call concurrently."""

    # ------------------------------------------------------------------
    # evaluation and derivatives
    # ------------------------------------------------------------------

    @staticmethod
    def components(fmap: MapModel, X: np.ndarray) -> np.ndarray:
        return np.stack([c(X) for c in fmap.components], axis=-1)

    @staticmethod
    def jacobian_matrix(fmap: MapModel, X: np.ndarray) -> np.ndarray:
        """Homogeneous Jacobian DF[..., i, j] = dF_i/dx_j."""
        return np.stack([c.gradient(X) for c in fmap.components], axis=-2)

    @classmethod
    def image(cls, fmap: MapModel, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Normalized images plus a mask of rows where every component vanished."""
        Xn = normalize(X)
        F = cls.components(fmap, Xn)
        vanish = np.max(np.abs(F), axis=-1) < settings.ZERO_COMPONENT_TOL
        F = np.where(vanish[..., None], np.ones_like(F), F)
        return normalize(F), vanish

    @classmethod
    def evaluate_array(cls, fmap: MapModel, X: np.ndarray) -> np.ndarray:
        images, vanish = cls.image(fmap, X)
        if np.any(vanish):
            raise AllComponentsVanish(f"{fmap.id}: all components vanish at {int(vanish.sum())} point(s)")
        return images

    @classmethod
    def evaluate(cls, fmap: MapModel, x: ProjectivePoint) -> ProjectivePoint:
        return ProjectivePoint(cls.evaluate_array(fmap, x.coords[None, :])[0])

    @classmethod
    def forward(cls, fmap: MapModel, X: np.ndarray, n: int) -> np.ndarray:
        out = normalize(X)
        for _ in range(n):
            out = cls.evaluate_array(fmap, out)
        return out

    @classmethod
    def tangent_matrices(cls, fmap: MapModel, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """df in orthonormal chart-aligned frames at x and f(x), with |F| at the unit representative.

        For |x| = 1 and frames Ux of x^perp and Uy of F(x)^perp,
        M = Uy^H DF(x) Ux / |F(x)|.
        """
        u = unit(X)
        F = cls.components(fmap, u)
        fnorm = np.linalg.norm(F, axis=-1)
        safe = fnorm > 0
        Fu = np.where(safe[..., None], F / np.where(safe, fnorm, 1.0)[..., None], u)
        DF = cls.jacobian_matrix(fmap, u)
        Ux = tangent_frame(u)
        Uy = tangent_frame(Fu)
        M = np.conj(np.swapaxes(Uy, -1, -2)) @ DF @ Ux
        M = M / np.where(safe, fnorm, np.inf)[..., None, None]
        return M, fnorm

    @classmethod
    def derivative_data(cls, fmap: MapModel, X: np.ndarray, with_second: bool = False) -> DerivativeData:
        X = np.atleast_2d(X)
        M, fnorm = cls.tangent_matrices(fmap, X)
        s = np.linalg.svd(M, compute_uv=False)
        op = s[:, 0]
        smin = s[:, -1]
        with np.errstate(divide="ignore"):
            inv = np.where(smin > 0, 1.0 / np.where(smin > 0, smin, 1.0), np.inf)
        jac = np.abs(np.linalg.det(M)) ** 2
        second = np.zeros(len(X))
        if with_second:
            u = unit(X)
            Ux = tangent_frame(u)
            H = np.stack([c.hessian(u) for c in fmap.components], axis=-3)  # (n, k+1, k+1, k+1)
            restricted = np.einsum("nlab,nac,nbd->nlcd", H, Ux, Ux)
            second = np.sqrt(np.sum(np.abs(restricted) ** 2, axis=(1, 2, 3))) / np.where(fnorm > 0, fnorm, np.inf)
        return DerivativeData(op_norm=op, inv_norm=inv, jacobian=jac, second=second)

    @classmethod
    def differential(cls, fmap: MapModel, x: ProjectivePoint) -> TangentMatrix:
        M, _ = cls.tangent_matrices(fmap, x.coords[None, :])
        data = cls.derivative_data(fmap, x.coords[None, :])
        return TangentMatrix(
            entries=M[0],
            op_norm=float(data.op_norm[0]),
            inv_norm=float(data.inv_norm[0]),
            fs_jacobian=float(data.jacobian[0]),
        )

    @classmethod
    def critical_poly(cls, fmap: MapModel, X: np.ndarray) -> np.ndarray:
        """Value of the critical-set polynomial det DF at the unit representative."""
        return fmap.critical(unit(X))

    @classmethod
    def jacobians(cls, fmap: MapModel, X: np.ndarray) -> np.ndarray:
        """Jac f = |det DF|^2 / (d^2 |F|^(2k+2)) at |x| = 1."""
        u = unit(np.atleast_2d(X))
        fnorm = np.linalg.norm(cls.components(fmap, u), axis=-1)
        crit = np.abs(cls.critical_poly(fmap, u)) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            jac = crit / (fmap.degree**2 * fnorm ** (2 * fmap.k + 2))
        return np.where(fnorm > 0, jac, 0.0)

    @classmethod
    def fs_jacobian(cls, fmap: MapModel, x: ProjectivePoint) -> float:
        return float(cls.jacobians(fmap, x.coords[None, :])[0])

    # ------------------------------------------------------------------
    # preimages
    # ------------------------------------------------------------------

    @classmethod
    def all_preimages_array(cls, fmap: MapModel, Y: np.ndarray) -> np.ndarray:
        """All d_t preimages of each target, listed with multiplicity: shape (n, d_t, k+1)."""
        Y = normalize(np.atleast_2d(Y))
        if fmap.kind == MapKind.RATIONAL_P1:
            pc, qc = _dense_pair(fmap)
            H = Y[:, 1:2] * pc[None, :] - Y[:, 0:1] * qc[None, :]
            return batched_binary_roots(H)
        if fmap.kind == MapKind.HOMOGENEOUS_PK:
            return cls._diagonal_preimages(fmap, Y)
        return cls._skew_preimages(fmap, Y)

    @classmethod
    def _diagonal_preimages(cls, fmap: MapModel, Y: np.ndarray) -> np.ndarray:
        coeffs = _diagonal_coefficients(fmap)
        if coeffs is None:
            raise UnsupportedPreimages(f"{fmap.id}: preimages need diagonal components c_i x_i^d")
        d, k = fmap.degree, fmap.k
        ratio = Y / coeffs[None, :]
        j = np.argmax(np.abs(ratio), axis=1)
        base = (ratio / np.take_along_axis(ratio, j[:, None], axis=1)) ** (1.0 / d)
        omega = np.exp(2j * np.pi * np.arange(d) / d)
        free = np.array([[i for i in range(k + 1) if i != c] for c in range(k + 1)])[j]  # (n, k)
        base_free = np.take_along_axis(base, free, axis=1)
        out = np.zeros((len(Y), d**k, k + 1), dtype=complex)
        for b in range(d**k):
            digits = np.array([(b // d**i) % d for i in range(k)])
            branch = np.zeros((len(Y), k + 1), dtype=complex)
            branch[np.arange(len(Y)), j] = 1.0
            np.put_along_axis(branch, free, base_free * omega[digits][None, :], axis=1)
            out[:, b] = branch
        return out

    @classmethod
    def _skew_preimages(cls, fmap: MapModel, Y: np.ndarray) -> np.ndarray:
        parts = _skew_parts(fmap)
        if parts is None:
            raise UnsupportedPreimages(f"{fmap.id}: not a triangular skew product")
        pc, q_table, c = parts
        d = fmap.degree
        n = len(Y)
        out = np.zeros((n, d * d, 3), dtype=complex)
        finite = Y[:, 2] != 0
        if np.any(finite):
            Yf = Y[finite]
            H = Yf[:, 2:3] * pc[None, :]
            H[:, 0] -= Yf[:, 0] * c
            zroots = batched_binary_roots(H)  # (m, d, 2), t != 0 since p_d != 0
            z = zroots[..., 0] / zroots[..., 1]
            # g_j(z) = y2 * q_j(z, 1) - [j == 0] y1 c, ascending in w
            zpow = _powers(z, d)  # (m, d, d+1)
            G = np.einsum("mia,ja->mij", zpow, q_table) * Yf[:, 2, None, None]
            G[..., 0] -= (Yf[:, 1] * c)[:, None]
            wroots = batched_binary_roots(G.reshape(-1, d + 1)).reshape(len(Yf), d, d, 2)
            w = wroots[..., 0] / wroots[..., 1]
            pts = np.stack([np.repeat(z[..., None], d, axis=-1), w, np.ones_like(w)], axis=-1)
            out[finite] = pts.reshape(len(Yf), d * d, 3)
        for row in np.nonzero(~finite)[0]:
            pts, mult = cls._skew_preimages_at_infinity(fmap, Y[row])
            out[row] = np.repeat(pts, mult, axis=0)[: d * d]
        return out

    @classmethod
    def _skew_preimages_at_infinity(cls, fmap: MapModel, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Targets on {t = 0}: preimages lie on {t = 0}, each root with multiplicity d."""
        pc, q_table, _ = _skew_parts(fmap)
        d = fmap.degree
        # y1 * p_d z^d - y0 * q(z, w, 0) as a binary form in (w, z), ascending in w
        form = np.zeros(d + 1, dtype=complex)
        for j in range(d + 1):
            form[j] -= y[0] * q_table[j, d - j]
        form[0] += y[1] * pc[d]
        pts, mult = binary_roots(form)
        full = np.stack([pts[:, 1], pts[:, 0], np.zeros(len(pts))], axis=-1)
        return normalize(full), mult * d

    @classmethod
    def preimage_branch(cls, fmap: MapModel, Y: np.ndarray, branch: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Pick preimage number branch[i] of Y[i]; returns normalized points and residuals."""
        allp = cls.all_preimages_array(fmap, Y)
        X = normalize(allp[np.arange(len(allp)), np.asarray(branch)])
        images, vanish = cls.image(fmap, X)
        residual = np.where(vanish, np.inf, chordal(images, Y))
        return X, residual

    @classmethod
    def preimages(cls, fmap: MapModel, y: ProjectivePoint) -> List[Tuple[ProjectivePoint, int]]:
        allp = cls.all_preimages_array(fmap, y.coords[None, :])[0]
        pts, mult = cluster(allp, settings.ROOT_CLUSTER_TOL)
        images, vanish = cls.image(fmap, pts)
        keep = ~vanish
        if np.any(vanish):
            logger.debug(f"{fmap.id}: dropped {int(vanish.sum())} root(s) where every component vanishes")
        pts, mult, images = pts[keep], mult[keep], images[keep]
        residual = chordal(images, y.coords[None, :])
        if len(residual) and float(np.max(residual)) > settings.PREIMAGE_RESIDUAL_TOL:
            raise RootSolverFailure(
                f"{fmap.id}: preimage residual {float(np.max(residual)):.2e} above "
                f"{settings.PREIMAGE_RESIDUAL_TOL:.0e} for target {y}"
            )
        return [(ProjectivePoint(p), int(m)) for p, m in zip(pts, mult)]

    # ------------------------------------------------------------------
    # exceptional and critical sets
    # ------------------------------------------------------------------

    @staticmethod
    def _polynomial_proxy(polys: Sequence[HomogeneousPolynomial], X: np.ndarray) -> np.ndarray:
        u = unit(np.atleast_2d(X))
        best = np.ones(len(u))
        for v in polys:
            grad = np.linalg.norm(v.gradient(u), axis=-1)
            proxy = np.abs(v(u)) / np.maximum(grad, settings.J_GRADIENT_FLOOR)
            best = np.minimum(best, proxy)
        return np.clip(best, 0.0, 1.0)

    @staticmethod
    def _point_distance(points: np.ndarray, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        if len(points) == 0:
            return np.ones(len(X))
        return np.min(chordal(X[:, None, :], points[None, :, :]), axis=1)

    @classmethod
    def distances_to_J(cls, fmap: MapModel, X: np.ndarray) -> np.ndarray:
        if fmap.k == 1:
            return cls._point_distance(fmap.j_points, X)
        return cls._polynomial_proxy(fmap.j_polynomials, X)

    @classmethod
    def distance_to_J(cls, fmap: MapModel, x: ProjectivePoint) -> float:
        return float(cls.distances_to_J(fmap, x.coords[None, :])[0])

    @classmethod
    def distances_to_C(cls, fmap: MapModel, X: np.ndarray) -> np.ndarray:
        if fmap.k == 1:
            return cls._point_distance(fmap.critical_points, X)
        return cls._polynomial_proxy([fmap.critical], X)

    @classmethod
    def distance_to_C(cls, fmap: MapModel, x: ProjectivePoint) -> float:
        return float(cls.distances_to_C(fmap, x.coords[None, :])[0])

    # ------------------------------------------------------------------
    # degrees and holomorphy
    # ------------------------------------------------------------------

    @classmethod
    def check_degrees(cls, fmap: MapModel, n_targets: int = 3, seed: int = 0) -> DegreeReport:
        rng = stream(seed, "degrees")
        counts: List[int] = []
        while len(counts) < n_targets:
            y = random_points(fmap.k, 1, rng)
            if cls.distances_to_J(fmap, y)[0] < 1e-3:
                continue
            pre = cls.preimages(fmap, ProjectivePoint(y[0]))
            counts.append(sum(m for _, m in pre))
        numeric = min(counts)
        report = DegreeReport(
            map_id=fmap.id,
            d_t_declared=fmap.d_t,
            d_t_numeric=numeric,
            counts=counts,
            lambda_k_minus_1=fmap.lambda_k_minus_1,
            hypothesis_ok=fmap.d_t > fmap.lambda_k_minus_1,
        )
        if any(c != fmap.d_t for c in counts):
            raise DegreeMismatch(f"{fmap.id}: declared d_t={fmap.d_t} but counted {counts}")
        logger.info(f"{fmap.id}: d_t_numeric={numeric}, hypothesis_ok={report.hypothesis_ok}")
        return report

    @classmethod
    def check_holomorphic(cls, fmap: MapModel) -> float:
        """Smallest normalized size of F found; raises DegreeMismatch on a common zero."""
        if fmap.k == 1:
            pc, qc = _dense_pair(fmap)
            s = np.linalg.svd(sylvester_matrix(pc, qc), compute_uv=False)
            measure = float(s[-1] / s[0]) if s[0] > 0 else 0.0
        else:
            measure = cls._sphere_search(fmap)
        if measure < settings.RESULTANT_TOL:
            raise DegreeMismatch(f"{fmap.id}: components share a common zero (measure {measure:.2e})")
        return measure

    @classmethod
    def _sphere_search(cls, fmap: MapModel) -> float:
        rng = stream(0, "holomorphy")
        X = random_points(fmap.k, settings.HOLOMORPHY_SAMPLES, rng)
        scale = max(c.scale_norm() for c in fmap.components)
        size = np.linalg.norm(cls.components(fmap, unit(X)), axis=-1)
        W = X[np.argsort(size)[:5]].copy()
        chart = np.argmax(np.abs(W), axis=1)
        for _ in range(20):
            W = W / np.take_along_axis(W, chart[:, None], axis=1)
            F = cls.components(fmap, W)
            DF = cls.jacobian_matrix(fmap, W)
            for row in range(len(W)):
                free = [j for j in range(fmap.nvars) if j != chart[row]]
                step = np.linalg.pinv(DF[row][:, free]) @ F[row]
                W[row, free] -= step
        size = np.linalg.norm(cls.components(fmap, unit(W)), axis=-1)
        return float(np.min(size) / scale)

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------

    @classmethod
    def assemble(
        cls,
        *,
        map_id: str,
        kind: MapKind,
        k: int,
        degree: int,
        d_t: int,
        dyn_degrees: Sequence[int],
        components: Sequence[HomogeneousPolynomial],
        exceptional_polynomials: Sequence[HomogeneousPolynomial] = (),
        exceptional_points: Optional[np.ndarray] = None,
        description: str = "",
        strict: bool = True,
    ) -> MapModel:
        """Build a MapModel and precompute its critical and exceptional data."""
        comps = list(components)
        jac_rows = [[c.partial(j) for j in range(k + 1)] for c in comps]
        critical = determinant(jac_rows)
        fmap = MapModel(
            id=map_id,
            kind=kind,
            k=k,
            degree=degree,
            d_t=d_t,
            dyn_degrees=list(dyn_degrees),
            components=comps,
            critical=critical,
            exceptional_polynomials=list(exceptional_polynomials),
            description=description,
        )
        if strict:
            cls.check_holomorphic(fmap)
        if k == 1:
            return cls._with_exceptional_points(fmap, exceptional_points)
        pulled = [v.compose(comps) for v in fmap.exceptional_polynomials]
        fmap = dataclasses.replace(fmap, j_polynomials=list(fmap.exceptional_polynomials) + pulled)
        if not fmap.exceptional_polynomials:
            logger.warning(f"{map_id}: no exceptional curves declared; distance to J is taken as 1")
        else:
            cls._validate_exceptional_curves(fmap)
        return fmap

    @classmethod
    def _with_exceptional_points(cls, fmap: MapModel, declared: Optional[np.ndarray]) -> MapModel:
        crit_pts = np.zeros((0, 2), dtype=complex)
        if not fmap.critical.is_zero:
            crit_pts, _ = binary_roots(fmap.critical.binary_coefficients())
        values = []
        if len(crit_pts):
            images, vanish = cls.image(fmap, crit_pts)
            values = list(images[~vanish])
        if declared is not None and len(declared):
            values += list(normalize(np.atleast_2d(declared)))
        if not values:
            return dataclasses.replace(fmap, critical_points=crit_pts)
        j_prime, _ = cluster(np.stack(values), settings.ROOT_CLUSTER_TOL)
        pts = list(j_prime)
        for v in j_prime:
            pts += [p.coords for p, _ in cls.preimages(fmap, ProjectivePoint(v))]
        j_points, _ = cluster(np.stack(pts), settings.ROOT_CLUSTER_TOL)
        logger.debug(f"{fmap.id}: |C|={len(crit_pts)}, |J'|={len(j_prime)}, |J|={len(j_points)}")
        return dataclasses.replace(fmap, j_points=j_points, critical_points=crit_pts)

    @classmethod
    def critical_samples(cls, fmap: MapModel, n_lines: int = 3, seed: int = 0) -> np.ndarray:
        """Points of the critical curve (k=2) found on random projective lines."""
        rng = stream(seed, "critical-samples")
        found = []
        for _ in range(n_lines):
            a, b = random_points(2, 2, rng)
            line = [
                HomogeneousPolynomial.from_terms({(1, 0): a[i], (0, 1): b[i]}, nvars=2)
                for i in range(3)
            ]
            restricted = fmap.critical.compose(line)
            if restricted.is_zero:
                continue
            roots, _ = binary_roots(restricted.binary_coefficients())
            found += [r[0] * a + r[1] * b for r in roots]
        if not found:
            return np.zeros((0, 3), dtype=complex)
        return normalize(np.stack(found))

    @classmethod
    def _validate_exceptional_curves(cls, fmap: MapModel) -> int:
        samples = cls.critical_samples(fmap)
        if len(samples) == 0:
            return 0
        images, vanish = cls.image(fmap, samples)
        proxy = cls._polynomial_proxy(fmap.exceptional_polynomials, images[~vanish])
        misses = int(np.sum(proxy > 1e-6))
        if misses:
            logger.warning(
                f"{fmap.id}: {misses}/{len(proxy)} critical values miss the declared exceptional curves"
            )
        return misses

    @classmethod
    def iterate(cls, fmap: MapModel, m: int) -> MapModel:
        """The m-th iterate as an explicit map of the same kind.

        On P^2 the declared exceptional curves are inherited unchanged.
        """
        if m < 1:
            raise ValueError("Iterate order must be >= 1")
        comps = list(fmap.components)
        for _ in range(m - 1):
            comps = [c.compose(fmap.components) for c in comps]
        declared = None
        if fmap.k == 1 and len(fmap.j_points):
            declared = fmap.j_points
        return cls.assemble(
            map_id=f"{fmap.id}^{m}",
            kind=fmap.kind,
            k=fmap.k,
            degree=fmap.degree**m,
            d_t=fmap.d_t**m,
            dyn_degrees=[lam**m for lam in fmap.dyn_degrees],
            components=comps,
            exceptional_polynomials=fmap.exceptional_polynomials,
            exceptional_points=declared,
            description=f"iterate {m} of {fmap.id}",
            strict=False,
        )
