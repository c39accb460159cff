import numpy as np
import pytest

from memfep import BoundaryProfile, Domain, Particle, make_configuration


@pytest.fixture
def domain():
    return Domain(10.0, 10.0)


@pytest.fixture
def two_particles(domain):
    """Asymmetric pair with non-constant profiles on both particles."""
    p1 = Particle((3.6, 4.7), 0.3, 1.0, BoundaryProfile((0.0, 0.1), (0.3, 0.0, 0.0, 0.1)))
    p2 = Particle((6.5, 5.4), -0.2, 1.0, BoundaryProfile((0.0,), (0.3, 0.1)))
    return make_configuration(domain, [p1, p2])


@pytest.fixture
def single_particle(domain):
    return make_configuration(domain, [Particle((4.0, 5.3), 0.0, 1.0, BoundaryProfile.constant(0.0, 0.3))])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
