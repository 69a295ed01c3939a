import numpy as np
import pytest

from app.branches import BranchService, USelector, slow_variation_check
from app.branches.newton import newton_branch
from app.branches.service import constant_C, held_out_bound, pull_back
from app.core.exceptions import NonIntegrable, OrbitTooCloseToJ
from app.core.projective import ProjectivePoint, chordal, halton_ball
from app.maps import MapService
from app.sampler import SamplerService, nearest_to
from app.sampler.models import BackwardOrbit

EPS = 0.05
ONE = ProjectivePoint.affine_point(1.0)


@pytest.fixture(scope="module")
def fixed_orbit(z2):
    return SamplerService.sample_backward_orbit(z2, ONE, 10, branch_selector=nearest_to(ONE))


@pytest.fixture(scope="module")
def circle_orbit(z3):
    return SamplerService.sample_backward_orbit(z3, ProjectivePoint.affine_point(np.exp(0.3j)), 20, rng_seed=5)


def test_constant_C():
    expected = max(np.exp(EPS / 2), 1 / (1 - np.exp(-EPS / 2))) * 1.01
    assert constant_C(EPS) == pytest.approx(expected)
    assert constant_C(EPS) > 1


def test_eps_is_clamped_against_smallest_exponent():
    assert BranchService.resolve_eps(0.5, np.log(2)) == pytest.approx(np.log(2) / 10)
    assert BranchService.resolve_eps(0.01, np.log(2)) == 0.01
    assert BranchService.resolve_eps(None, None) == EPS


def test_newton_finds_the_square_root(z2):
    targets = halton_ball(ONE.coords, 0.01, 20)
    sol = newton_branch(z2, ONE.coords, targets)
    assert np.all(sol.converged)
    np.testing.assert_allclose(chordal(MapService.evaluate_array(z2, sol.points), targets), 0.0, atol=1e-12)
    assert np.max(chordal(sol.points, ONE.coords[None, :])) < 0.02


def test_pull_back_follows_anchor(lattes):
    x = ProjectivePoint.affine_point(0.4 - 0.3j).coords
    Y = halton_ball(MapService.evaluate_array(lattes, x[None, :])[0], 1e-4, 10)
    W = pull_back(lattes, Y, x)
    assert np.max(chordal(W, x[None, :])) < 1e-2
    assert np.max(chordal(MapService.evaluate_array(lattes, W), Y)) < 1e-9


def test_fixed_orbit_schedule(z2, fixed_orbit):
    schedule = BranchService.radius_schedule(z2, fixed_orbit, EPS)
    assert schedule.A1_hat == pytest.approx(0.5 / np.sqrt(2), rel=1e-9)
    assert len(schedule.entries) == 10
    for entry in schedule.entries:
        assert entry.alpha_n == pytest.approx(0.5, rel=1e-9)
        assert entry.op_norm == pytest.approx(2.0, rel=1e-9)
        assert entry.inv_norm == pytest.approx(0.5, rel=1e-9)
        assert entry.jacobian == pytest.approx(4.0, rel=1e-9)
        assert entry.M_n_hat > 1
    radii = np.array([e.r_n for e in schedule.entries])
    np.testing.assert_allclose(radii[1:] / radii[:-1], np.exp(-EPS), rtol=1e-3)


def test_fixed_orbit_is_certified(z2, fixed_orbit):
    schedule = BranchService.radius_schedule(z2, fixed_orbit, EPS)
    cert = BranchService.certify_branches(z2, fixed_orbit, schedule, chi_k=np.log(2), sigma=np.log(2))
    assert cert.fully_certified
    assert cert.truncated_reason is None
    assert all(rec.passed and rec.newton_ok and rec.unique_ok for rec in cert.schedule)
    assert cert.composed_identity_error <= 1e-7
    assert cert.inclusion_ok
    # the radii decay like e^{-n eps}, well inside the slow-decay allowance
    assert cert.rho_hat <= 1.0 / 3.0 + 1e-2
    assert cert.r_hat == pytest.approx(schedule.entries[0].r_n)
    assert cert.eta_ok and cert.kappa_ok


def test_late_radius_drop_breaks_held_out_eta(z2, fixed_orbit):
    schedule = BranchService.radius_schedule(z2, fixed_orbit, EPS).scaled(8, 1e-3)
    cert = BranchService.certify_branches(z2, fixed_orbit, schedule, chi_k=np.log(2), sigma=np.log(2))
    # a smaller ball passes every per-depth check
    assert cert.fully_certified
    assert cert.eta_ok is False
    assert cert.kappa_ok


def test_held_out_bound():
    flat = np.zeros(10)
    assert held_out_bound(flat, upper=False, tol=0.01)
    assert held_out_bound(flat, upper=True, tol=0.01)
    late_dip = np.r_[np.zeros(5), [0.0, -0.5, 0.0, 0.0, 0.0]]
    assert held_out_bound(late_dip, upper=False, tol=0.05) is False
    assert held_out_bound(late_dip, upper=True, tol=0.05)
    late_rise = -late_dip
    assert held_out_bound(late_rise, upper=True, tol=0.05) is False
    assert held_out_bound(np.array([1.0]), upper=True, tol=0.0) is None


def test_circle_orbit_certificate(z3, circle_orbit):
    cert = BranchService.certify_orbit(z3, circle_orbit, EPS)
    assert cert.max_certified_depth == 20
    passed = [r for r in cert.schedule if r.passed]
    for rec in passed:
        assert rec.dist_J == pytest.approx(1 / np.sqrt(2), rel=1e-6)
        assert np.log(rec.r_n) >= np.log(cert.eta_hat) - 3 * cert.rho_hat * rec.n * EPS - 1e-9
        assert rec.lip_g <= rec.inv_norm * np.exp(EPS / 2) * 1.05
        assert rec.jac_min >= rec.jacobian * np.exp(-EPS / 2) * 0.95
    assert cert.volume_ok
    assert cert.eta_ok and cert.kappa_ok


def test_orbit_too_close_to_exceptional_set(z2):
    orbit = BackwardOrbit(
        points=np.array([[1e-28, 1.0], [1e-14, 1.0]], dtype=complex),
        residuals=np.array([0.0]),
        rng_seed=0,
        map_id=z2.id,
    )
    with pytest.raises(OrbitTooCloseToJ):
        BranchService.radius_schedule(z2, orbit, EPS)
    cert = BranchService.certify_orbit(z2, orbit, EPS)
    assert cert.truncated_reason == "too_close_to_J"
    assert cert.max_certified_depth == 0


def test_enlarged_radius_fails(z2):
    # a ball of radius 0.1 around 0.05 contains the critical value 0
    orbit = SamplerService.sample_backward_orbit(z2, ProjectivePoint.affine_point(0.05), 3, rng_seed=1)
    schedule = BranchService.radius_schedule(z2, orbit, EPS)
    enlarged = schedule.scaled(0, 0.1 / schedule.entries[0].r_n)
    assert enlarged.entries[0].r_n == pytest.approx(0.1)
    cert = BranchService.certify_branches(z2, orbit, enlarged)
    assert not cert.schedule[0].passed
    assert cert.max_certified_depth == 0
    assert cert.truncated_reason in ("bound_failure", "newton_divergence")
    assert len(cert.schedule) == 1


def test_lattes_orbits_are_certified(lattes, lattes_cloud, lattes_lyap):
    orbits, _ = SamplerService.sample_backward_orbits(lattes, lattes_cloud.points[:100], 20, rng_seed=17)
    certs, summary = BranchService.certify_orbits(lattes, orbits, EPS, lattes_lyap, workers=2)
    assert summary.n_orbits == 100
    assert summary.fraction_full_depth >= 0.95
    assert summary.max_identity_error <= 1e-7
    assert summary.slow_decay_ok
    assert [c.orbit_ref for c in certs] == [o.orbit_id for o in orbits]


def test_constant_observable_has_trivial_envelopes(z2, fixed_orbit):
    check = slow_variation_check(z2, fixed_orbit, lambda X: np.ones(len(X)), EPS)
    assert check.violations == 0
    assert check.V1_hat == 1.0 and check.V2_hat == 1.0
    assert check.chi_hat == 0.0


@pytest.mark.parametrize("selector", [USelector.DIST_TO_J, USelector.OP_NORM, USelector.MIN_DERIVATIVE_DATA])
def test_observables_on_circle_orbit(z3, circle_orbit, selector):
    check = slow_variation_check(z3, circle_orbit, selector, EPS)
    assert check.violations == 0
    assert check.depths_tested == 20
    assert check.V1_hat <= 1.0 <= check.V2_hat


def test_op_norm_growth_rate(z3, circle_orbit):
    check = slow_variation_check(z3, circle_orbit, USelector.OP_NORM, EPS)
    assert check.chi_hat == pytest.approx(np.log(3), rel=1e-6)


def test_vanishing_observable_is_not_integrable(z2, fixed_orbit):
    with pytest.raises(NonIntegrable):
        slow_variation_check(z2, fixed_orbit, lambda X: np.zeros(len(X)), EPS)


def test_jacobian_observable_along_chebyshev_orbits(chebyshev, chebyshev_cloud):
    orbits, _ = SamplerService.sample_backward_orbits(chebyshev, chebyshev_cloud.points[:20], 50, rng_seed=2)
    rates = [slow_variation_check(chebyshev, o, USelector.JACOBIAN, EPS).chi_hat for o in orbits]
    # 2 * chi for Jac on P^1
    assert np.mean(rates) == pytest.approx(2 * np.log(2), abs=0.25)
