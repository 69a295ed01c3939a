import numpy as np
import pytest

from app.core.exceptions import InsufficientSamples
from app.lyapunov import LyapunovService
from app.lyapunov.service import batch_means_stderr
from app.maps import MapService

LOG2 = float(np.log(2.0))


def test_z2_exponent_is_log2(z2_lyap):
    assert z2_lyap.chi == [pytest.approx(LOG2, rel=1e-6)]
    assert z2_lyap.sigma == pytest.approx(LOG2, rel=1e-6)
    assert z2_lyap.discards == 0


def test_chebyshev_exponent(chebyshev, chebyshev_cloud):
    est = LyapunovService.cocycle_spectrum(chebyshev, chebyshev_cloud, 20)
    assert est.chi_1 == pytest.approx(LOG2, rel=0.03)


def test_lattes_exponent_is_minimal(lattes, lattes_lyap):
    # (1/2) log d_t is the smallest possible exponent and Lattes maps attain it
    assert lattes_lyap.chi_1 == pytest.approx(0.5 * np.log(lattes.d_t), rel=0.03)
    report = LyapunovService.exponent_inequality_check(lattes, lattes_lyap)
    assert report.ok
    assert abs(report.chi1_margin) < 0.03


def test_product_spectrum(product, product_lyap):
    assert len(product_lyap.chi) == 2
    for chi in product_lyap.chi:
        assert chi == pytest.approx(LOG2, rel=0.03)
    assert product_lyap.sigma == pytest.approx(2 * LOG2, rel=0.03)
    assert product_lyap.chi[0] <= product_lyap.chi[1]
    assert LyapunovService.exponent_inequality_check(product, product_lyap).ok


def test_jacobian_sum_agrees_with_cocycle(lattes, lattes_cloud, lattes_lyap, product, product_cloud, product_lyap):
    for fmap, cloud, est in ((lattes, lattes_cloud, lattes_lyap), (product, product_cloud, product_lyap)):
        jac = LyapunovService.sum_exponents_from_jacobian(fmap, cloud)
        tol = 4 * np.hypot(jac.stderr, est.sigma_stderr) + 1e-6
        assert abs(jac.value - est.sigma) <= tol
        assert jac.n_used + jac.discards == cloud.count


@pytest.mark.parametrize("map_id", ["z2", "z3", "chebyshev", "quadratic_perturbed", "lattes4", "product_p2"])
def test_iterate_doubles_exponents(equilibrium, map_id):
    fmap, cloud, est = equilibrium(map_id)
    f2 = MapService.iterate(fmap, 2)
    est2 = LyapunovService.cocycle_spectrum(f2, cloud, 10)
    # ten steps of f^2 are twenty steps of f from the same points
    assert est2.chi == pytest.approx([2 * c for c in est.chi], abs=1e-5)


@pytest.mark.parametrize("map_id", ["z2", "z3", "chebyshev", "quadratic_perturbed", "lattes4", "product_p2", "skew_p2"])
def test_exponent_inequalities_hold(equilibrium, map_id):
    fmap, _, est = equilibrium(map_id)
    report = LyapunovService.exponent_inequality_check(fmap, est)
    assert report.ok, report.model_dump()
    assert est.chi == sorted(est.chi)


def test_z3_jacobian_sum_is_log3(equilibrium):
    fmap, cloud, est = equilibrium("z3")
    jac = LyapunovService.sum_exponents_from_jacobian(fmap, cloud)
    # |f'| = 3 on the unit circle, so every term is log 3
    assert jac.value == pytest.approx(np.log(3.0), rel=1e-6)
    assert est.chi == [pytest.approx(np.log(3.0), rel=1e-6)]


def test_block_lengths_are_reported(z2, z2_cloud):
    by_block = LyapunovService.exponent_spectrum_by_block(z2, z2_cloud, [5, 10])
    assert sorted(by_block) == [5, 10]
    assert by_block[5].n_cocycle == 5


def test_too_few_samples(lattes, lattes_cloud):
    with pytest.raises(InsufficientSamples):
        LyapunovService.cocycle_spectrum(lattes, lattes_cloud.subset(50), 10)


def test_invalid_block_length(lattes, lattes_cloud):
    with pytest.raises(ValueError):
        LyapunovService.cocycle_spectrum(lattes, lattes_cloud, 0)


def test_log_integrability(lattes, lattes_cloud):
    report = LyapunovService.log_integrability_check(lattes, lattes_cloud)
    assert report.ok
    assert report.zero_distances == 0


def test_batch_means_stderr():
    assert batch_means_stderr(np.ones(100)) == pytest.approx(0.0)
    values = np.arange(40, dtype=float)
    assert batch_means_stderr(values, batches=4) > 0
    assert batch_means_stderr(np.array([3.0])) == 0.0


def test_block_lengths_agree_within_noise(product, product_cloud, product_lyap):
    short = LyapunovService.cocycle_spectrum(product, product_cloud, 10)
    for i in range(2):
        tol = 3 * np.hypot(short.stderr[i], product_lyap.stderr[i]) + 1e-9
        assert abs(short.chi[i] - product_lyap.chi[i]) <= tol


def test_worker_count_does_not_change_estimates(lattes, lattes_cloud, lattes_lyap):
    parallel = LyapunovService.cocycle_spectrum(lattes, lattes_cloud, 20, workers=4)
    assert parallel.chi == pytest.approx(lattes_lyap.chi, abs=1e-12)


def test_sum_consistency(z2, z2_cloud, z2_lyap, lattes, lattes_cloud, lattes_lyap, product, product_cloud, product_lyap):
    cases = ((z2, z2_cloud, z2_lyap), (lattes, lattes_cloud, lattes_lyap), (product, product_cloud, product_lyap))
    for fmap, cloud, est in cases:
        jac = LyapunovService.sum_exponents_from_jacobian(fmap, cloud)
        report = LyapunovService.sum_consistency_check(est, jac)
        assert report.sum_consistent, fmap.id
        assert report.difference <= report.tolerance + 1e-9


def test_sum_consistency_flags_a_shifted_sum(lattes, lattes_cloud, lattes_lyap):
    jac = LyapunovService.sum_exponents_from_jacobian(lattes, lattes_cloud)
    shifted = lattes_lyap.model_copy(update={"sigma": lattes_lyap.sigma + 1.0})
    report = LyapunovService.sum_consistency_check(shifted, jac)
    assert not report.sum_consistent
    assert report.difference == pytest.approx(abs(shifted.sigma - jac.value))


def test_sum_consistency_needs_one_map(z2, z2_cloud, lattes_lyap):
    with pytest.raises(ValueError):
        LyapunovService.sum_consistency_check(lattes_lyap, LyapunovService.sum_exponents_from_jacobian(z2, z2_cloud))
