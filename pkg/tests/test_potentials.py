import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memfep import (
    Discretization,
    Particle,
    PhysicsParams,
    PotentialModel,
    SoftWallParams,
    direct_potential,
    full_potential,
    gradient,
    hamiltonian,
    lj_pair,
    make_configuration,
    solve_membrane,
    wall_term,
)
from memfep.geometry import ParticleConfig


def pair(domain, d, sigma_wall=1e-3):
    cfg = make_configuration(domain, [Particle((4.0, 5.0)), Particle((6.0 + d, 5.0))])
    return cfg, SoftWallParams.uniform(2, 1.5, 0.4, sigma_wall)


def test_lj_zero_at_sigma(domain):
    cfg, sw = pair(domain, 0.4)
    assert lj_pair(cfg, 0, 1, sw) == pytest.approx(0.0, abs=1e-12)


def test_lj_minimum(domain):
    cfg, sw = pair(domain, 2 ** (1 / 6) * 0.4)
    assert lj_pair(cfg, 0, 1, sw) == pytest.approx(-1.5, rel=1e-12)
    _, g = direct_potential(cfg, SoftWallParams.build(2, 1.5, 0.4, 1e-9))
    assert abs(g[0]) < 1e-10


def test_lj_infinite_when_touching(domain):
    cfg = ParticleConfig(domain, [Particle((4.0, 5.0)), Particle((5.5, 5.0))])
    sw = SoftWallParams.uniform(2)
    assert lj_pair(cfg, 0, 1, sw) == math.inf
    p, g = direct_potential(cfg, sw)
    assert p == math.inf and np.all(np.isnan(g))
    with pytest.raises(ValueError):
        lj_pair(cfg, 1, 1, sw)


def test_wall_term_values(domain):
    cfg = make_configuration(domain, [Particle((1.5, 5.0))])
    sw = SoftWallParams.uniform(1, sigma_wall=0.5)
    assert wall_term(cfg, 0, sw) == pytest.approx(1.0)
    far = [wall_term(make_configuration(domain, [Particle((x, 5.0))]), 0, sw) for x in (1.5, 2.5, 3.5, 5.0)]
    assert all(a > b for a, b in zip(far, far[1:]))
    assert wall_term(ParticleConfig(domain, [Particle((0.5, 5.0))]), 0, sw) == math.inf


def test_double_sum_convention(domain):
    cfg, sw = pair(domain, 0.3)
    p, _ = direct_potential(cfg, sw)
    walls = wall_term(cfg, 0, sw) + wall_term(cfg, 1, sw)
    assert p == pytest.approx(2 * lj_pair(cfg, 0, 1, sw) + walls, rel=1e-14)


def test_far_from_walls_tiny_sigma(domain):
    cfg = make_configuration(domain, [Particle((5.0, 5.0))])
    p, g = direct_potential(cfg, SoftWallParams.uniform(1, sigma_wall=1e-4))
    assert p < 1e-20 and np.max(np.abs(g)) < 1e-20


def three(domain, jitter=(0.0, 0.0)):
    return make_configuration(
        domain,
        [Particle((3.0 + jitter[0], 4.0)), Particle((5.6, 5.1 + jitter[1]), 0.3), Particle((3.8, 6.9), -1.0, 0.7)],
    )


def three_params():
    eps = np.array([[0, 1.0, 0.5], [1.0, 0, 2.0], [0.5, 2.0, 0]])
    sig = np.array([[1, 0.3, 0.4], [0.3, 1, 0.5], [0.4, 0.5, 1]])
    return SoftWallParams.build(3, eps, sig, [0.2, 0.3, 0.4])


def test_direct_gradient_matches_finite_differences(domain):
    cfg, sw = three(domain), three_params()
    _, g = direct_potential(cfg, sw)
    q = cfg.coordinates()
    for k in range(9):
        e = np.zeros(9)
        e[k] = 1e-6
        fd = (direct_potential(cfg.with_coordinates(q + e), sw)[0] - direct_potential(cfg.with_coordinates(q - e), sw)[0]) / 2e-6
        assert g[k] == pytest.approx(fd, rel=1e-6, abs=1e-9)
    np.testing.assert_array_equal(g[2::3], 0.0)


def test_permutation_invariance(domain):
    cfg, sw = three(domain), three_params()
    perm = [2, 0, 1]
    cfg2 = cfg.with_particles([cfg.particles[i] for i in perm])
    sw2 = SoftWallParams.build(3, sw.eps[np.ix_(perm, perm)], sw.sigma_pair[np.ix_(perm, perm)], sw.sigma_wall[perm])
    assert direct_potential(cfg2, sw2)[0] == pytest.approx(direct_potential(cfg, sw)[0], rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_pair_part_translation_invariant(domain_shift_x, domain_shift_y):
    from memfep import Domain

    dom = Domain(10.0, 10.0)
    cfg = make_configuration(dom, [Particle((4.0, 5.0)), Particle((6.3, 5.4))])
    moved = make_configuration(
        dom, [Particle((4.0 + domain_shift_x, 5.0 + domain_shift_y)), Particle((6.3 + domain_shift_x, 5.4 + domain_shift_y))]
    )
    sw = SoftWallParams.uniform(2)
    assert lj_pair(moved, 0, 1, sw) == pytest.approx(lj_pair(cfg, 0, 1, sw), rel=1e-9, abs=1e-15)


def test_params_validation():
    with pytest.raises(ValueError):
        SoftWallParams.build(2, [[0, 1], [2, 0]], 0.3, 0.3)
    with pytest.raises(ValueError):
        SoftWallParams.build(2, -1.0, 0.3, 0.3)
    with pytest.raises(ValueError):
        SoftWallParams.build(2, 1.0, 0.0, 0.3)
    with pytest.raises(ValueError):
        SoftWallParams.build(2, 1.0, 0.3, [0.3, 0.3, 0.3])


def test_membrane_free_mode_is_direct(domain):
    cfg, sw = three(domain), three_params()
    e, g = full_potential(cfg, PhysicsParams(), Discretization(nx=16), sw, membrane=False)
    p, gp = direct_potential(cfg, sw)
    assert e == p
    np.testing.assert_array_equal(g, gp)


def test_flat_profiles_energy_is_direct(domain):
    cfg, sw = three(domain), three_params()
    e, _ = full_potential(cfg, PhysicsParams(1.0, 1.0), Discretization(nx=24), sw)
    assert e == pytest.approx(direct_potential(cfg, sw)[0], abs=1e-10)


def test_full_potential_sums_parts(two_particles):
    sw = SoftWallParams.uniform(2, 1.0, 0.3, 0.2)
    disc, phys = Discretization(nx=32), PhysicsParams(1.0, 1.0)
    e, g = full_potential(two_particles, phys, disc, sw)
    p, gp = direct_potential(two_particles, sw)
    assert e == pytest.approx(solve_membrane(two_particles, phys, disc).energy + p, rel=1e-12)
    np.testing.assert_allclose(g, gradient(two_particles, phys, disc) + gp, rtol=1e-10)


def test_full_gradient_matches_finite_differences(two_particles):
    sw = SoftWallParams.uniform(2, 0.05, 0.3, 0.2)
    disc, phys = Discretization(nx=48, subsample=16), PhysicsParams(1.0, 1.0)
    _, g = full_potential(two_particles, phys, disc, sw)
    q = two_particles.coordinates()
    for k in (0, 4):
        e = np.zeros(6)
        e[k] = 1e-3
        ep = full_potential(two_particles.with_coordinates(q + e), phys, disc, sw)[0]
        em = full_potential(two_particles.with_coordinates(q - e), phys, disc, sw)[0]
        assert g[k] == pytest.approx((ep - em) / 2e-3, rel=0.02)


def test_hamiltonian(domain):
    cfg = make_configuration(domain, [Particle((5.0, 5.0))])
    model = PotentialModel(membrane=False)
    assert hamiltonian(cfg, [1.0, 0.0, 0.0], model) == 0.5
    sw = SoftWallParams.uniform(1)
    model = PotentialModel(softwall=sw, membrane=False)
    assert hamiltonian(cfg, np.zeros(3), model) == direct_potential(cfg, sw)[0]
    with pytest.raises(ValueError):
        hamiltonian(cfg, [1.0], model)


def test_hamiltonian_additive_for_independent_particles(domain):
    sw = SoftWallParams.build(2, 0.0, 0.3, 0.5)
    model = PotentialModel(softwall=sw, membrane=False)
    a = make_configuration(domain, [Particle((2.0, 3.0))])
    b = make_configuration(domain, [Particle((7.0, 6.5))])
    both = make_configuration(domain, [*a.particles, *b.particles])
    one = PotentialModel(softwall=SoftWallParams.uniform(1, sigma_wall=0.5), membrane=False)
    va, vb = [0.1, -0.2, 0.3], [0.5, 0.0, -1.0]
    h = hamiltonian(both, va + vb, model)
    assert h == pytest.approx(hamiltonian(a, va, one) + hamiltonian(b, vb, one), rel=1e-14)
