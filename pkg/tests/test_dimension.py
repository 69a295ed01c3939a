import numpy as np
import pytest

from app.branches import BranchService
from app.core.exceptions import ConfigError, DimensionEstimateFailed, HypothesisViolation, InsufficientMass
from app.core.projective import ProjectivePoint
from app.dimension import DimensionMethod, DimensionService, RadiiSchedule, minoration_check, theorem_bounds, verify_theorem
from app.dimension.bounds import alpha_eps
from app.dimension.minoration import shrink_radii
from app.sampler import SamplerService

LOG2 = float(np.log(2.0))


@pytest.fixture(scope="module")
def z2_dims(z2_cloud):
    return {m: DimensionService.aggregate_dimension(z2_cloud, 200, method=m) for m in DimensionMethod}


@pytest.fixture(scope="module")
def lattes_dims(lattes_cloud):
    return {m: DimensionService.aggregate_dimension(lattes_cloud, 200, method=m) for m in DimensionMethod}


# ----------------------------------------------------------------------
# radii
# ----------------------------------------------------------------------


def test_default_schedule(z2_cloud):
    schedule = DimensionService.default_schedule(z2_cloud)
    assert schedule.n_radii == 16
    assert schedule.h == 0.25
    # the unit circle has chordal diameter 1
    assert schedule.rho0 == pytest.approx(0.2, rel=1e-3)
    assert np.all(np.diff(schedule.radii) < 0)


def test_young_condition():
    good = RadiiSchedule(rho0=0.2, h=0.25, n_radii=16)
    deviation = DimensionService.young_deviation(good)
    assert deviation[-1] <= 0.05
    assert DimensionService.young_ok(good)
    coarse = RadiiSchedule(rho0=0.2, h=1.0, n_radii=4)
    assert not DimensionService.young_ok(coarse)


# ----------------------------------------------------------------------
# local dimension
# ----------------------------------------------------------------------


def test_local_dimension_on_circle(z2_cloud):
    x = ProjectivePoint.affine_point(np.exp(0.7j))
    local = DimensionService.local_dimension_at(z2_cloud, x)
    assert local.slope == pytest.approx(1.0, abs=0.1)
    assert local.radii_used >= 3
    assert local.min_ratio <= local.max_ratio


def test_local_dimension_on_lattes(lattes_cloud):
    local = DimensionService.local_dimension_at(lattes_cloud, ProjectivePoint.affine_point(0.3 + 0.2j))
    assert local.slope == pytest.approx(2.0, abs=0.15)


def test_point_off_support_has_no_mass(z2_cloud):
    with pytest.raises(InsufficientMass):
        DimensionService.local_dimension_at(z2_cloud, ProjectivePoint.affine_point(0.1))


def test_leave_one_out_uses_one_fewer_point(z2_cloud):
    x = z2_cloud.points[0]
    kept = DimensionService.local_dimension_at(z2_cloud, x)
    dropped = DimensionService.local_dimension_at(z2_cloud, x, leave_one_out=True)
    assert dropped.slope == pytest.approx(kept.slope, abs=0.05)


def test_radii_outside_resolvable_window_are_flagged(z2_cloud):
    lo, hi = DimensionService.radius_window(z2_cloud)
    assert 0 < lo < hi
    assert hi == pytest.approx(0.3, rel=1e-3)
    x = ProjectivePoint.affine_point(np.exp(0.7j))
    assert DimensionService.local_dimension_at(z2_cloud, x).radii_outside_window == 0
    # 0.6 and 0.36 exceed 0.3 x diameter; the last radii fall under the point spacing
    wide = RadiiSchedule(rho0=0.6, h=0.5, n_radii=16)
    local = DimensionService.local_dimension_at(z2_cloud, x, schedule=wide)
    expected = int(np.sum((wide.radii < lo) | (wide.radii > hi)))
    assert local.radii_outside_window == expected
    assert expected >= 2


# ----------------------------------------------------------------------
# aggregates
# ----------------------------------------------------------------------


def test_circle_dimension(z2_dims):
    for method, est in z2_dims.items():
        assert est.dim_hat == pytest.approx(1.0, abs=0.1), method
        assert est.ci[0] <= est.dim_hat <= est.ci[1]
        assert est.young_ok
    local = z2_dims[DimensionMethod.LOCAL_SLOPE]
    assert local.n_centers == 200
    assert len(local.local_dims) == 200 - local.dropped


def test_chebyshev_dimension(chebyshev_cloud):
    est = DimensionService.aggregate_dimension(chebyshev_cloud, 200)
    assert est.dim_hat == pytest.approx(1.0, abs=0.1)


def test_lattes_dimension(lattes_dims):
    assert lattes_dims[DimensionMethod.LOCAL_SLOPE].dim_hat == pytest.approx(2.0, abs=0.15)
    assert lattes_dims[DimensionMethod.CORRELATION].dim_hat == pytest.approx(2.0, abs=0.2)


def test_product_dimension(product_cloud):
    est = DimensionService.aggregate_dimension(product_cloud, 200)
    assert est.dim_hat == pytest.approx(2.0, abs=0.2)
    assert est.dim_hat <= 4.0


# the arcsine law on [-1, 1] bends the correlation integral by a log factor, so chebyshev is left out
@pytest.mark.parametrize("map_id", ["z2", "z3", "quadratic_perturbed", "lattes4", "product_p2"])
def test_methods_agree(equilibrium, map_id):
    _, cloud, _ = equilibrium(map_id)
    values = [DimensionService.aggregate_dimension(cloud, 200, method=m).dim_hat for m in DimensionMethod]
    assert max(values) - min(values) <= 0.25, values


def test_larger_cloud_moves_estimate_within_ci(z2_cloud, z2_dims):
    small = DimensionService.aggregate_dimension(z2_cloud.subset(2500), 200)
    full = z2_dims[DimensionMethod.LOCAL_SLOPE]
    assert abs(full.dim_hat - small.dim_hat) <= max(small.half_width, 0.02)


def test_too_few_centers(z2_cloud):
    with pytest.raises(ValueError):
        DimensionService.aggregate_dimension(z2_cloud, 10)


def test_isolated_centers_fail_the_estimate(z2_cloud):
    # radii far below the sample spacing leave every ball empty
    tiny = RadiiSchedule(rho0=1e-7, h=0.25, n_radii=8)
    with pytest.raises(DimensionEstimateFailed):
        DimensionService.aggregate_dimension(z2_cloud, 100, tiny)


def test_histogram_and_mass_curves(z2_cloud, z2_dims):
    hist = z2_dims[DimensionMethod.LOCAL_SLOPE].histogram(bins=10)
    assert len(hist["edges"]) == 11
    assert sum(hist["counts"]) == len(z2_dims[DimensionMethod.LOCAL_SLOPE].local_dims)
    rows = DimensionService.mass_curves(z2_cloud, z2_cloud.points[:3])
    assert {row[0] for row in rows} == {0, 1, 2}
    assert all(row[2] <= 0.0 for row in rows)


# ----------------------------------------------------------------------
# bounds and verdict
# ----------------------------------------------------------------------


@pytest.mark.parametrize(
    "k, d_t, sigma, chi_k, lower, upper",
    [
        (1, 2, LOG2, LOG2, 1.0, 1.0),
        (2, 4, 2 * LOG2, LOG2, 2.0, 2.0),
        (1, 2, 1.2 * LOG2, 1.2 * LOG2, 1 / 1.2, 1 / 1.2),
        (2, 4, 3 * LOG2, 2 * LOG2, 1.0, 2.0),
    ],
)
def test_theorem_bounds(k, d_t, sigma, chi_k, lower, upper):
    bounds = theorem_bounds(k, d_t, sigma, chi_k)
    assert bounds.lower == pytest.approx(lower)
    assert bounds.upper == pytest.approx(upper)
    assert bounds.lower <= bounds.upper + 1e-12
    assert [e for e, _ in bounds.alpha_eps_curve] == [0.01, 0.02, 0.05, 0.1]


def test_alpha_eps_tends_to_upper_bound():
    bounds = theorem_bounds(2, 4, 3 * LOG2, 2 * LOG2)
    assert alpha_eps(2, 4, 3 * LOG2, 2 * LOG2, 1e-9) == pytest.approx(bounds.upper, abs=1e-6)
    curve = dict(bounds.alpha_eps_curve)
    assert curve[0.01] < curve[0.1]


@pytest.mark.parametrize(
    "k, d_t, sigma, chi_k",
    [(1, 1, LOG2, LOG2), (1, 2, LOG2, 0.0), (1, 2, 0.2, LOG2)],
)
def test_theorem_bounds_reject_bad_inputs(k, d_t, sigma, chi_k):
    with pytest.raises(HypothesisViolation):
        theorem_bounds(k, d_t, sigma, chi_k)


def test_z2_verdict(z2, z2_lyap, z2_dims):
    verdict = verify_theorem(z2, z2_lyap, z2_dims[DimensionMethod.LOCAL_SLOPE])
    assert verdict.passed
    assert verdict.lower == pytest.approx(1.0, rel=1e-6)
    assert verdict.upper == pytest.approx(1.0, rel=1e-6)
    assert verdict.slack >= 0.02
    assert verdict.provenance["method"] == "local_slope"


def test_verdict_slack_is_the_largest_allowance(z2, z2_lyap, z2_dims):
    local = z2_dims[DimensionMethod.LOCAL_SLOPE]
    # the circle exponent is exact, so 3 x stderr vanishes and slack = max(half-width, floor)
    verdict = verify_theorem(z2, z2_lyap, local)
    assert verdict.slack == pytest.approx(max(local.half_width, 0.02))
    wide = local.model_copy(update={"dim_hat": 0.7, "ci": (0.3, 1.1)})
    verdict = verify_theorem(z2, z2_lyap, wide)
    assert verdict.slack == pytest.approx(0.4)
    assert verdict.passed
    tight = local.model_copy(update={"dim_hat": 0.985, "ci": (0.984, 0.986)})
    verdict = verify_theorem(z2, z2_lyap, tight)
    assert verdict.slack == pytest.approx(0.02)
    assert verdict.passed


def test_corrupted_estimate_fails_lower_bound(z2, z2_lyap, z2_dims):
    corrupted = z2_dims[DimensionMethod.LOCAL_SLOPE].model_copy(update={"dim_hat": 0.4})
    verdict = verify_theorem(z2, z2_lyap, corrupted)
    assert not verdict.pass_lower
    assert verdict.pass_upper
    assert not verdict.passed


def test_lattes_and_product_verdicts(lattes, lattes_lyap, lattes_dims, product, product_cloud, product_lyap):
    assert verify_theorem(lattes, lattes_lyap, lattes_dims[DimensionMethod.LOCAL_SLOPE]).passed
    product_dim = DimensionService.aggregate_dimension(product_cloud, 200)
    assert verify_theorem(product, product_lyap, product_dim).passed


def test_verdict_rejects_mismatched_estimates(lattes, z2_lyap, z2_dims):
    with pytest.raises(ConfigError):
        verify_theorem(lattes, z2_lyap, z2_dims[DimensionMethod.LOCAL_SLOPE])


# ----------------------------------------------------------------------
# minoration
# ----------------------------------------------------------------------


def test_shrink_radii():
    depths = np.arange(1, 4)
    delta = shrink_radii(LOG2, 0.05, 0.0, depths)
    np.testing.assert_allclose(delta, np.exp(-depths * (LOG2 + 0.1)))


def test_minoration_on_circle(z2, z2_cloud, z2_lyap):
    orbits, _ = SamplerService.sample_backward_orbits(z2, z2_cloud.points[:50], 10, rng_seed=4)
    certs, _ = BranchService.certify_orbits(z2, orbits, 0.05, z2_lyap)
    report = minoration_check(z2, z2_cloud, orbits, certs, z2_lyap)
    assert report.n_train + report.n_test == 50
    assert report.sigma_hat > 0
    assert report.depths == list(range(1, 11))
    assert report.ok
    assert all(m <= b for m, b in zip(report.max_test_mass, report.bound))
