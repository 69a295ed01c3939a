"""Shared fixtures: bundled maps, equilibrium clouds and exponent estimates.

Clouds are expensive, so every fixture here is session-scoped and seeded.
"""

from pathlib import Path

import pytest

from app.core.projective import ProjectivePoint
from app.lyapunov import LyapunovService
from app.maps import load_map
from app.sampler import SamplerService

DATA_DIR = Path(__file__).resolve().parent / "data"

RNG_SEED = 20240601
CLOUD_DEPTH = 30
CLOUD_COUNT = 10_000


def _cloud(fmap, seed: ProjectivePoint, count: int = CLOUD_COUNT):
    return SamplerService.sample_backward_cloud(fmap, seed, CLOUD_DEPTH, count, RNG_SEED)


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def z2():
    return load_map("z2")


@pytest.fixture(scope="session")
def z3():
    return load_map("z3")


@pytest.fixture(scope="session")
def chebyshev():
    return load_map("chebyshev")


@pytest.fixture(scope="session")
def lattes():
    return load_map("lattes4")


@pytest.fixture(scope="session")
def product():
    return load_map("product_p2")


@pytest.fixture(scope="session")
def z2_cloud(z2):
    return _cloud(z2, ProjectivePoint.affine_point(2.0))


@pytest.fixture(scope="session")
def chebyshev_cloud(chebyshev):
    return _cloud(chebyshev, ProjectivePoint.affine_point(0.3 + 0.4j))


@pytest.fixture(scope="session")
def lattes_cloud(lattes):
    return _cloud(lattes, ProjectivePoint.affine_point(0.37 + 0.21j))


@pytest.fixture(scope="session")
def product_cloud(product):
    return _cloud(product, ProjectivePoint.affine_point(0.6 + 0.2j, 1.5 - 0.3j))


@pytest.fixture(scope="session")
def z2_lyap(z2, z2_cloud):
    return LyapunovService.cocycle_spectrum(z2, z2_cloud, 20)


@pytest.fixture(scope="session")
def lattes_lyap(lattes, lattes_cloud):
    return LyapunovService.cocycle_spectrum(lattes, lattes_cloud, 20)


@pytest.fixture(scope="session")
def product_lyap(product, product_cloud):
    return LyapunovService.cocycle_spectrum(product, product_cloud, 20)


EQUILIBRIUM_SEEDS = {
    "z2": (2.0,),
    "z3": (2.0,),
    "chebyshev": (0.3 + 0.4j,),
    "lattes4": (0.37 + 0.21j,),
    "quadratic_perturbed": (0.3 + 0.4j,),
    "product_p2": (0.6 + 0.2j, 1.5 - 0.3j),
    "skew_p2": (0.6 + 0.2j, 1.5 - 0.3j),
}


@pytest.fixture(scope="session")
def equilibrium(z2_cloud, chebyshev_cloud, lattes_cloud, product_cloud):
    """equilibrium(map_id) -> (map, cloud, block-20 spectrum), built once per map."""
    named = {"z2": z2_cloud, "chebyshev": chebyshev_cloud, "lattes4": lattes_cloud, "product_p2": product_cloud}
    cache = {}

    def get(map_id: str):
        if map_id not in cache:
            fmap = load_map(map_id)
            cloud = named.get(map_id)
            if cloud is None:
                cloud = _cloud(fmap, ProjectivePoint.affine_point(*EQUILIBRIUM_SEEDS[map_id]))
            cache[map_id] = (fmap, cloud, LyapunovService.cocycle_spectrum(fmap, cloud, 20))
        return cache[map_id]

    return get
