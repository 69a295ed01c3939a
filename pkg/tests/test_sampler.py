import numpy as np
import pytest
from scipy import stats

from app.core.exceptions import ExceptionalSeed, OrbitHitsJ
from app.core.projective import ProjectivePoint, affine, chordal
from app.maps import MapService, load_map
from app.sampler import SamplerService, nearest_to
from app.sampler.models import BackwardOrbit

from tests.conftest import CLOUD_DEPTH, RNG_SEED


def _affine_z(points):
    chart, coords = affine(points)
    return np.where(chart == 1, coords[:, 0], 1.0 / coords[:, 0])


def test_z2_cloud_lies_on_unit_circle(z2_cloud):
    z = _affine_z(z2_cloud.points)
    assert np.max(np.abs(np.abs(z) - 1.0)) < 1e-8
    assert z2_cloud.count == 10_000
    assert z2_cloud.depth == CLOUD_DEPTH


def test_z2_cloud_is_uniform_in_angle(z2_cloud):
    z = _affine_z(z2_cloud.points)
    theta = (np.angle(z) + np.pi) / (2 * np.pi)
    assert stats.kstest(theta, "uniform").pvalue > 0.01


def test_chebyshev_cloud_follows_arcsine_law(chebyshev_cloud):
    x = _affine_z(chebyshev_cloud.points)
    assert np.max(np.abs(x.imag)) < 1e-3
    assert np.max(np.abs(x.real)) <= 2.0 + 1e-3
    edges = np.linspace(-2.0, 2.0, 21)
    cdf = 0.5 + np.arcsin(np.clip(edges / 2.0, -1.0, 1.0)) / np.pi
    expected = np.diff(cdf) * len(x)
    observed, _ = np.histogram(np.clip(x.real, -2.0, 2.0), bins=edges)
    assert stats.chisquare(observed, expected).pvalue > 0.01


def test_ball_mass_matches_arc_length(z2_cloud):
    center = ProjectivePoint.affine_point(1.0)
    for r in (0.05, 0.2, 0.5):
        mass = SamplerService.ball_mass(z2_cloud, center, r)
        # chordal radius r on the circle subtends half-angle 2 arcsin(r)
        exact = 2.0 * np.arcsin(r) / np.pi
        se = np.sqrt(exact * (1 - exact) / z2_cloud.count)
        assert abs(mass - exact) < 4 * se
    assert SamplerService.ball_mass(z2_cloud, center, 0.0) == 0.0
    assert SamplerService.ball_mass(z2_cloud, center, 1.0) == 1.0


def test_cloud_is_reproducible_and_worker_independent(lattes):
    seed = ProjectivePoint.affine_point(0.37 + 0.21j)
    a = SamplerService.sample_backward_cloud(lattes, seed, 12, 3000, RNG_SEED, workers=1)
    b = SamplerService.sample_backward_cloud(lattes, seed, 12, 3000, RNG_SEED, workers=3)
    c = SamplerService.sample_backward_cloud(lattes, seed, 12, 3000, RNG_SEED + 1, workers=1)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)


def test_cloud_passes_forward_return_check(lattes, lattes_cloud, product, product_cloud):
    assert SamplerService.verify_cloud(lattes, lattes_cloud).ok
    assert SamplerService.verify_cloud(product, product_cloud).ok


def test_pushforward_stays_on_support(z2, z2_cloud):
    pushed = SamplerService.pushforward_cloud(z2, z2_cloud)
    z = _affine_z(pushed.points)
    assert np.max(np.abs(np.abs(z) - 1.0)) < 1e-7
    assert pushed.stage == "pushforward"


def test_seed_on_exceptional_set_is_rejected(z2):
    with pytest.raises(ExceptionalSeed):
        SamplerService.sample_backward_cloud(z2, ProjectivePoint.of(0, 1), 5, 10)


def test_depth_zero_cloud_repeats_seed(z2):
    seed = ProjectivePoint.affine_point(2.0)
    cloud = SamplerService.sample_backward_cloud(z2, seed, 0, 7)
    assert cloud.count == 7
    assert np.allclose(cloud.points, seed.coords[None, :])


def test_orbit_replays_from_its_seed(lattes):
    start = ProjectivePoint.affine_point(0.4 - 0.3j)
    a = SamplerService.sample_backward_orbit(lattes, start, 15, rng_seed=9, index=4)
    b = SamplerService.sample_backward_orbit(lattes, start, 15, rng_seed=9, index=4)
    assert np.array_equal(a.points, b.points)
    assert a.orbit_id == "lattes4:9:4"
    assert a.depth == 15
    assert np.max(a.residuals) <= 1e-9


def test_orbit_branch_selector(z2):
    orbit = SamplerService.sample_backward_orbit(
        z2, ProjectivePoint.affine_point(1.0), 6, branch_selector=nearest_to(ProjectivePoint.affine_point(1.0))
    )
    assert np.allclose(orbit.points, orbit.points[0][None, :])


def test_orbit_from_exceptional_point_raises(z2):
    with pytest.raises(OrbitHitsJ):
        SamplerService.sample_backward_orbit(z2, ProjectivePoint.of(1, 0), 3)


def test_vectorized_orbits_match_starts(lattes, lattes_cloud):
    orbits, redraws = SamplerService.sample_backward_orbits(lattes, lattes_cloud.points[:8], 10, rng_seed=3)
    assert len(orbits) == 8
    assert redraws == 0
    for i, orbit in enumerate(orbits):
        assert isinstance(orbit, BackwardOrbit)
        assert orbit.index == i
        assert np.allclose(orbit.points[0], lattes_cloud.points[i])
    assert len(SamplerService.burned_in(orbits[0])) == 1


def _random_balls(cloud, n, seed):
    rng = np.random.default_rng(seed)
    centers = cloud.points[rng.choice(cloud.count, n, replace=False)]
    radii = rng.uniform(0.05, 0.3, n)
    return centers, radii


def test_pushforward_preserves_ball_masses(lattes, lattes_cloud):
    pushed = SamplerService.pushforward_cloud(lattes, lattes_cloud)
    centers, radii = _random_balls(lattes_cloud, 20, 1)
    a = SamplerService.ball_masses(lattes_cloud, centers, radii)
    b = SamplerService.ball_masses(pushed, centers, radii)
    se = np.sqrt(2 * np.maximum(a * (1 - a), 1e-4) / lattes_cloud.count)
    assert np.all(np.abs(a - b) <= 4 * se)


def test_clouds_from_different_seeds_agree(lattes, lattes_cloud):
    other = SamplerService.sample_backward_cloud(
        lattes, ProjectivePoint.affine_point(-1.3 + 0.8j), CLOUD_DEPTH, lattes_cloud.count, RNG_SEED + 7
    )
    centers, radii = _random_balls(lattes_cloud, 20, 2)
    a = SamplerService.ball_masses(lattes_cloud, centers, radii)
    b = SamplerService.ball_masses(other, centers, radii)
    se = np.sqrt(2 * np.maximum(a * (1 - a), 1e-4) / lattes_cloud.count)
    assert np.all(np.abs(a - b) <= 4 * se)


def test_orbit_from_i_stays_on_circle(z2):
    orbit = SamplerService.sample_backward_orbit(z2, ProjectivePoint.affine_point(1j), 10, rng_seed=3)
    z = _affine_z(orbit.points)
    np.testing.assert_allclose(np.abs(z), 1.0, atol=1e-12)
    # each step halves the angle up to the choice of square root
    angles = np.angle(z)
    for j in range(10):
        assert np.abs(np.exp(2j * angles[j + 1]) - np.exp(1j * angles[j])) < 1e-9
    assert chordal(MapService.forward(z2, orbit.points[-1:], 10)[0], orbit.points[0]) < 1e-6


@pytest.mark.parametrize(
    "map_id, target",
    [("z3", (0.8 + 0.3j,)), ("product_p2", (0.6 + 0.2j, 1.5 - 0.3j))],
)
def test_depth_one_branches_are_equally_likely(map_id, target):
    fmap = load_map(map_id)
    y = ProjectivePoint.affine_point(*target)
    branches = np.stack([p.coords for p, _ in MapService.preimages(fmap, y)])
    assert len(branches) == fmap.d_t
    cloud = SamplerService.sample_backward_cloud(fmap, y, 1, 4000, RNG_SEED)
    dist = chordal(cloud.points[:, None, :], branches[None, :, :])
    assert np.max(np.min(dist, axis=1)) < 1e-8
    freq = np.bincount(np.argmin(dist, axis=1), minlength=fmap.d_t) / cloud.count
    p = 1.0 / fmap.d_t
    assert np.all(np.abs(freq - p) <= 4 * np.sqrt(p * (1 - p) / cloud.count)), freq
