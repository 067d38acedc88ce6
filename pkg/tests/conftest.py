import pytest

from linfric.assembly import damping_coefficient, prepare_anisotropic
from linfric.contact_model import ContactParams

RADIUS = 1e-3
DENSITY = 2650.0
KN = 1e5


def desk_params(mu: float = 0.5) -> ContactParams:
    return ContactParams(kn=KN, kt=0.8 * KN, mu=mu,
                         nu=damping_coefficient(0.85 * RADIUS, DENSITY, KN, 0.3))


@pytest.fixture(scope="session")
def anisotropic_packing():
    """216 spheres in static equilibrium under anisotropic stress (about 30 s to build)."""
    return prepare_anisotropic(216, RADIUS, desk_params(), seed=1, p0=1e5, q_over_p=0.35,
                               density=DENSITY)


@pytest.fixture(scope="session")
def small_packing():
    """64 spheres in anisotropic static equilibrium (a few seconds to build)."""
    return prepare_anisotropic(64, RADIUS, desk_params(), seed=2, p0=1e5, q_over_p=0.35,
                               density=DENSITY)
