import numpy as np
import pytest
from scipy import stats
from scipy.spatial import cKDTree

from app.core.exceptions import DegreeMismatch, HypothesisViolation, InvalidMapDefinition, MapException
from app.core.projective import ProjectivePoint, chordal, embed, random_points
from app.core.rng import stream
from app.maps import MapService, list_maps, load_definition, load_map
from app.maps.catalog import build_map

BUNDLED = ["z2", "z3", "chebyshev", "lattes4", "quadratic_perturbed", "product_p2", "skew_p2"]


def test_bundled_maps_are_listed():
    ids = {m.id for m in list_maps()}
    assert set(BUNDLED) <= ids


@pytest.mark.parametrize("map_id", BUNDLED)
def test_every_preimage_maps_back(map_id):
    fmap = load_map(map_id)
    Y = random_points(fmap.k, 5, stream(7, "test-preimages"))
    allp = MapService.all_preimages_array(fmap, Y)
    assert allp.shape == (5, fmap.d_t, fmap.k + 1)
    for b in range(fmap.d_t):
        _, residual = MapService.preimage_branch(fmap, Y, np.full(5, b))
        assert np.max(residual) <= 1e-9


@pytest.mark.parametrize("map_id", ["z2", "lattes4", "product_p2", "skew_p2"])
def test_declared_degree_matches_preimage_count(map_id):
    fmap = load_map(map_id)
    report = MapService.check_degrees(fmap, n_targets=3)
    assert report.d_t_numeric == fmap.d_t
    assert report.hypothesis_ok


def test_degenerate_definition_is_rejected(data_dir):
    with pytest.raises(DegreeMismatch):
        load_map(data_dir / "degenerate_cubic.json")


def test_degenerate_definition_fails_degree_count_without_holomorphy_check(data_dir):
    fmap = build_map(load_definition(data_dir / "degenerate_cubic.json"), strict=False)
    with pytest.raises(MapException):
        MapService.check_degrees(fmap)


def test_degree_one_map_violates_hypothesis(data_dir):
    with pytest.raises(HypothesisViolation):
        load_map(data_dir / "mobius.json")


def test_unknown_map_reference():
    with pytest.raises(InvalidMapDefinition):
        load_map("no_such_map")


def test_malformed_definition(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"id": "broken", "kind": "rational_P1"', encoding="utf-8")
    with pytest.raises(InvalidMapDefinition):
        load_map(path)


def test_z2_evaluation_and_exceptional_set(z2):
    x = ProjectivePoint.affine_point(0.5 + 0.5j)
    assert chordal(MapService.evaluate(z2, x).coords, ProjectivePoint.affine_point(0.5j).coords) < 1e-14
    assert MapService.distance_to_J(z2, ProjectivePoint.affine_point(1.0)) == pytest.approx(1 / np.sqrt(2), abs=1e-12)
    assert MapService.distance_to_J(z2, ProjectivePoint.of(0, 1)) < 1e-12
    assert MapService.distance_to_J(z2, ProjectivePoint.of(1, 0)) < 1e-12


def test_critical_polynomial_on_z2(z2):
    # det DF = 4 z t, so |det| = 2 at the unit representative of [1:1]
    one = ProjectivePoint.affine_point(1.0)
    assert abs(MapService.critical_poly(z2, one.coords[None, :])[0]) == pytest.approx(2.0, rel=1e-12)
    assert MapService.critical_poly(z2, np.array([[0.0, 1.0]], dtype=complex))[0] == pytest.approx(0.0, abs=1e-14)
    # |f'| = 2 on the unit circle
    assert MapService.fs_jacobian(z2, one) == pytest.approx(4.0, rel=1e-12)


def test_differential_norms(z2, product):
    d = MapService.differential(z2, ProjectivePoint.affine_point(1.0))
    assert d.op_norm == pytest.approx(2.0, rel=1e-9)
    assert d.inv_norm == pytest.approx(0.5, rel=1e-9)
    assert d.fs_jacobian == pytest.approx(4.0, rel=1e-9)

    critical = MapService.differential(z2, ProjectivePoint.affine_point(0.0))
    assert critical.fs_jacobian == pytest.approx(0.0, abs=1e-14)
    assert critical.inv_norm > 1e12

    d2 = MapService.differential(product, ProjectivePoint.affine_point(1.0, 1.0))
    assert d2.entries.shape == (2, 2)
    assert d2.op_norm == pytest.approx(2.0, rel=1e-9)
    assert d2.fs_jacobian == pytest.approx(16.0, rel=1e-9)


def _affine_map(fmap, zeta: np.ndarray) -> np.ndarray:
    F = MapService.components(fmap, np.append(zeta, 1.0)[None, :])[0]
    return F[:-1] / F[-1]


def _fs_metric_root(zeta: np.ndarray) -> np.ndarray:
    """Square root of the Fubini-Study metric matrix in the affine chart at zeta."""
    s = 1.0 + np.vdot(zeta, zeta).real
    metric = (s * np.eye(len(zeta)) - np.outer(zeta, np.conj(zeta))) / s**2
    w, V = np.linalg.eigh(metric)
    return (V * np.sqrt(w)) @ np.conj(V.T)


@pytest.mark.parametrize("map_id", ["lattes4", "product_p2", "skew_p2"])
def test_fubini_study_derivative_matches_finite_differences(map_id):
    fmap = load_map(map_id)
    rng = stream(3, "test-fd")
    h = 1e-6
    for _ in range(8):
        zeta = rng.normal(size=fmap.k) + 1j * rng.normal(size=fmap.k)
        A = np.stack(
            [(_affine_map(fmap, zeta + h * e) - _affine_map(fmap, zeta - h * e)) / (2 * h) for e in np.eye(fmap.k)],
            axis=1,
        )
        M = _fs_metric_root(_affine_map(fmap, zeta)) @ A @ np.linalg.inv(_fs_metric_root(zeta))
        s = np.linalg.svd(M, compute_uv=False)
        data = MapService.derivative_data(fmap, np.append(zeta, 1.0)[None, :])
        assert data.op_norm[0] == pytest.approx(s[0], rel=1e-5)
        assert data.inv_norm[0] == pytest.approx(1 / s[-1], rel=1e-5)
        assert data.jacobian[0] == pytest.approx(abs(np.linalg.det(M)) ** 2, rel=1e-5)


@pytest.mark.parametrize("map_id", ["lattes4", "product_p2", "skew_p2"])
def test_jacobian_is_small_near_critical_set(map_id):
    fmap = load_map(map_id)
    X = random_points(fmap.k, 500, stream(17, "test-critical"))
    rho, pvalue = stats.spearmanr(MapService.distances_to_C(fmap, X), MapService.jacobians(fmap, X))
    assert rho > 0.3
    assert pvalue < 1e-3


@pytest.mark.parametrize("map_id", ["lattes4", "quadratic_perturbed", "product_p2"])
def test_jacobian_chain_rule(map_id):
    fmap = load_map(map_id)
    f2 = MapService.iterate(fmap, 2)
    X = random_points(fmap.k, 20, stream(11, "test-chain"))
    direct = MapService.jacobians(f2, X)
    chained = MapService.jacobians(fmap, X) * MapService.jacobians(fmap, MapService.evaluate_array(fmap, X))
    np.testing.assert_allclose(direct, chained, rtol=1e-8)


def test_iterate_degrees(lattes, product):
    f2 = MapService.iterate(lattes, 2)
    assert (f2.degree, f2.d_t, f2.dyn_degrees) == (16, 16, [16])
    g3 = MapService.iterate(product, 3)
    assert (g3.degree, g3.d_t, g3.dyn_degrees) == (8, 64, [8, 64])
    X = random_points(1, 4, stream(5, "test-iterate"))
    np.testing.assert_allclose(
        chordal(MapService.evaluate_array(f2, X), MapService.forward(lattes, X, 2)), 0.0, atol=1e-12
    )


def test_critical_points_have_zero_jacobian(chebyshev):
    assert len(chebyshev.critical_points) == 2
    jac = MapService.jacobians(chebyshev, chebyshev.critical_points)
    assert np.max(jac) < 1e-20
    assert MapService.distance_to_C(chebyshev, ProjectivePoint.affine_point(0.0)) < 1e-12


def _conic_points(a: complex, n: int = 400) -> np.ndarray:
    """Dense sample of the conic w^2 = a z t, parametrized as [s0^2 : sqrt(a) s0 s1 : s1^2]."""
    theta, phi = np.meshgrid(
        np.linspace(0.0, np.pi, n), np.linspace(0.0, 2 * np.pi, 2 * n, endpoint=False), indexing="ij"
    )
    s0 = np.cos(theta / 2).ravel()
    s1 = (np.sin(theta / 2) * np.exp(1j * phi)).ravel()
    return np.stack([s0**2, np.sqrt(complex(a)) * s0 * s1, s1**2], axis=1)


# zero sets of the declared curves and their pullbacks: coordinate lines and conics w^2 = a z t
J_CURVES = {
    "product_p2": ([0, 1, 2], []),
    "skew_p2": ([0, 1, 2], [0.09, -0.6]),
}


@pytest.mark.parametrize("map_id", sorted(J_CURVES))
def test_distance_to_J_proxy_is_within_factor_three(map_id):
    fmap = load_map(map_id)
    lines, conics = J_CURVES[map_id]
    X = random_points(2, 1000, stream(13, "test-j-proxy"))
    u = X / np.linalg.norm(X, axis=1, keepdims=True)
    # the chordal distance from a unit vector to {x_i = 0} is |u_i|
    true = np.min(np.abs(u[:, lines]), axis=1)
    for a in conics:
        nearest, _ = cKDTree(embed(_conic_points(a))).query(embed(X))
        true = np.minimum(true, nearest)
    keep = true > 0.02
    assert keep.sum() > 900
    ratio = MapService.distances_to_J(fmap, X)[keep] / true[keep]
    assert np.min(ratio) >= 1 / 3, np.min(ratio)
    assert np.max(ratio) <= 3, np.max(ratio)
    if not conics:
        assert np.max(ratio) <= 1 + 1e-9
