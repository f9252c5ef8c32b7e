import numpy as np
import pytest

from dgnse.cases import builtin_case
from dgnse.mesh import build_structured
from dgnse.spaces import MixedSpace


@pytest.fixture(scope="session")
def space4():
    return MixedSpace(build_structured(4))


@pytest.fixture(scope="session")
def space8():
    return MixedSpace(build_structured(8))


@pytest.fixture(scope="session")
def vortex():
    return builtin_case("taylor-vortex-box")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_velocity(space, rng, masked=True):
    c = rng.standard_normal(space.n_u)
    if masked:
        c[space.dirichlet_mask] = 0.0
    return c


def h1_scale(space, *fields):
    """1 + product of full H1 norms; bounds the trilinear forms up to a constant."""
    from dgnse.forms import velocity_h1_seminorm, velocity_l2_norm

    prod = 1.0
    for c in fields:
        prod *= np.hypot(velocity_l2_norm(space, c), velocity_h1_seminorm(space, c))
    return 1.0 + prod


def divergence_pairing(space, a, v, w, rule=None):
    """(div a, v . w) by quadrature."""
    from dgnse.quadrature import assembly_rule

    rule = rule or assembly_rule()
    tab = space.tabulate(rule)
    ga = space.velocity_gradients(a, rule)
    dv = ga[..., 0, 0] + ga[..., 1, 1]
    vw = np.einsum("cqe,cqe->cq", space.velocity_values(v, rule), space.velocity_values(w, rule))
    return float(np.sum(tab.wdet * dv * vw))
