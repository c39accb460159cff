import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memfep import (
    BoundaryProfile,
    Domain,
    EscapesDomain,
    Overlap,
    Particle,
    boundary_data,
    boundary_quadrature,
    make_configuration,
    min_separation,
    rigid_motion,
)
from memfep.geometry import inverse_rigid_motion


def test_centered_particle_is_valid(domain):
    cfg = make_configuration(domain, [Particle((5.0, 5.0))])
    assert cfg.n == 1
    assert cfg.is_feasible()


def test_overlap_detected(domain):
    with pytest.raises(Overlap) as e:
        make_configuration(domain, [Particle((4.0, 5.0)), Particle((5.5, 5.0))])
    assert (e.value.i, e.value.j) == (0, 1)


def test_touching_disks_overlap(domain):
    # feasibility is strict: zero clearance is infeasible
    with pytest.raises(Overlap):
        make_configuration(domain, [Particle((4.0, 5.0)), Particle((6.0, 5.0))])


def test_escape_detected(domain):
    with pytest.raises(EscapesDomain) as e:
        make_configuration(domain, [Particle((0.5, 5.0))])
    assert e.value.i == 0


def test_domain_rejects_nonpositive_lengths():
    with pytest.raises(ValueError):
        Domain(0.0, 1.0)


def test_particle_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        Particle((1.0, 1.0), radius=0.0)


def test_rigid_motion_quarter_turn():
    p = Particle((1.0, 2.0), math.pi / 2)
    np.testing.assert_allclose(rigid_motion(p, [1.0, 0.0]), [1.0, 3.0], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(
    st.floats(-5, 5), st.floats(-5, 5), st.floats(-10, 10),
    st.floats(-3, 3), st.floats(-3, 3),
)
def test_rigid_motion_roundtrip(x, y, alpha, yx, yy):
    p = Particle((x, y), alpha)
    back = inverse_rigid_motion(p, rigid_motion(p, [yx, yy]))
    np.testing.assert_allclose(back, [yx, yy], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-10, 10), st.floats(0.1, 5), st.floats(-math.pi, math.pi))
def test_rigid_motion_preserves_distance(alpha, r, t):
    p = Particle((2.0, -1.0), alpha)
    y = r * np.array([math.cos(t), math.sin(t)])
    assert np.linalg.norm(rigid_motion(p, y) - p.X) == pytest.approx(r, rel=1e-12)


def test_boundary_data_rotates_with_particle():
    prof = BoundaryProfile((0.0, 1.0), (0.0, 0.0, 2.0))  # h = cos, s = 2 sin
    p = Particle((0.0, 0.0), 0.7, 1.0, prof)
    x = rigid_motion(p, [[0.0, 1.0]])  # reference angle pi/2
    h, s = boundary_data(p, x)
    assert h[0] == pytest.approx(0.0, abs=1e-14)
    assert s[0] == pytest.approx(2.0, abs=1e-14)


def test_profile_interleaving():
    prof = BoundaryProfile((1.0, 2.0, 3.0), (0.5,))
    t = np.linspace(0, 2 * np.pi, 7)
    np.testing.assert_allclose(prof.contour(t), 1 + 2 * np.cos(t) + 3 * np.sin(t))
    np.testing.assert_allclose(prof.slope(t), 0.5)
    assert not prof.is_constant
    assert BoundaryProfile.constant(0.2, 0.3).is_constant


def test_profile_rejects_nonfinite():
    with pytest.raises(ValueError):
        BoundaryProfile((float("nan"),))


@pytest.mark.parametrize("m", [8, 64, 333])
def test_boundary_quadrature_invariants(m):
    p = Particle((3.0, 4.0), 0.2, 1.7)
    q = boundary_quadrature(p, m)
    assert q.weights.sum() == pytest.approx(2 * math.pi * 1.7, rel=1e-12)
    np.testing.assert_allclose(np.linalg.norm(q.normals, axis=1), 1.0, rtol=1e-14)
    # normals point into the particle
    np.testing.assert_allclose(q.points + 1.7 * q.normals, np.broadcast_to(p.X, q.points.shape), atol=1e-12)


def test_min_separation_picks_wall_or_pair(domain):
    cfg = make_configuration(domain, [Particle((1.5, 5.0)), Particle((5.0, 5.0))])
    assert min_separation(cfg) == pytest.approx(0.5)
    cfg = make_configuration(domain, [Particle((4.0, 5.0)), Particle((6.2, 5.0))])
    assert min_separation(cfg) == pytest.approx(0.2)


def test_coordinates_roundtrip(two_particles):
    q = two_particles.coordinates()
    assert q.shape == (6,)
    again = two_particles.with_coordinates(q)
    np.testing.assert_array_equal(again.coordinates(), q)
    with pytest.raises(Overlap):
        two_particles.with_coordinates([3.0, 5.0, 0.0, 4.0, 5.0, 0.0])
