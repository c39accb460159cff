"""Domain, particle and configuration geometry.

Particles are rigid disks moved by a planar rigid motion
``x = X + R(alpha) y``. Each carries a contour profile ``h`` and a slope
profile ``s`` given as truncated Fourier series over the reference boundary
angle.

Normal convention
-----------------
On a particle boundary the normal ``n`` is the outward normal of the
membrane region, so it points *into* the particle: ``n(x) = -(x - X) / r``.
Every module uses this convention for ``du/dn`` and for the tilt term
``beta . n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np


class GeometryError(ValueError):
    """Base class for infeasible configurations."""


class Overlap(GeometryError):
    def __init__(self, i: int, j: int, gap: float):
        super().__init__(f"particles {i} and {j} overlap (gap {gap:.6g})")
        self.i, self.j, self.gap = i, j, gap


class EscapesDomain(GeometryError):
    def __init__(self, i: int, clearance: float):
        super().__init__(f"particle {i} touches or leaves the domain (clearance {clearance:.6g})")
        self.i, self.clearance = i, clearance


def rotation(alpha: float) -> np.ndarray:
    c, s = math.cos(alpha), math.sin(alpha)
    return np.array([[c, -s], [s, c]])


# quarter turn, the generator of planar rotations
QUARTER_TURN = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class Domain:
    """The rectangle ``(0, lx) x (0, ly)``."""

    lx: float
    ly: float

    def __post_init__(self):
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError(f"domain lengths must be positive, got {self.lx}, {self.ly}")

    def wall_distance(self, points) -> np.ndarray:
        """Distance of points to the boundary of the rectangle (interior points)."""
        p = np.asarray(points, dtype=float)
        x, y = p[..., 0], p[..., 1]
        return np.minimum(np.minimum(x, self.lx - x), np.minimum(y, self.ly - y))


def _fourier_split(coeffs) -> tuple[np.ndarray, np.ndarray]:
    """Split ``[a0, a1, b1, a2, b2, ...]`` into cosine and sine arrays."""
    c = np.asarray(coeffs, dtype=float).ravel()
    if c.size == 0:
        c = np.zeros(1)
    if c.size % 2 == 0:
        c = np.append(c, 0.0)
    kmax = (c.size - 1) // 2
    a = np.empty(kmax + 1)
    b = np.zeros(kmax + 1)
    a[0] = c[0]
    a[1:] = c[1::2]
    b[1:] = c[2::2]
    return a, b


def _fourier_eval(a: np.ndarray, b: np.ndarray, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    k = np.arange(a.size)
    kt = np.multiply.outer(theta, k)
    return np.cos(kt) @ a + np.sin(kt) @ b


@dataclass(frozen=True)
class BoundaryProfile:
    """Contour and slope prescribed along a reference particle boundary.

    Coefficients are stored interleaved, ``[a0, a1, b1, a2, b2, ...]``, for
    ``f(theta) = a0 + sum_k a_k cos(k theta) + b_k sin(k theta)``.
    """

    h_coeffs: tuple = (0.0,)
    s_coeffs: tuple = (0.0,)

    def __post_init__(self):
        for name in ("h_coeffs", "s_coeffs"):
            v = tuple(float(c) for c in np.asarray(getattr(self, name), dtype=float).ravel())
            if not all(math.isfinite(c) for c in v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v or (0.0,))

    @classmethod
    def constant(cls, h: float = 0.0, s: float = 0.0) -> "BoundaryProfile":
        return cls((h,), (s,))

    def contour(self, theta) -> np.ndarray:
        return _fourier_eval(*_fourier_split(self.h_coeffs), theta)

    def slope(self, theta) -> np.ndarray:
        return _fourier_eval(*_fourier_split(self.s_coeffs), theta)

    @property
    def is_constant(self) -> bool:
        return not any(self.h_coeffs[1:]) and not any(self.s_coeffs[1:])

    def scaled(self, h_factor: float = 1.0, s_factor: float = 1.0) -> "BoundaryProfile":
        return BoundaryProfile(
            tuple(h_factor * c for c in self.h_coeffs),
            tuple(s_factor * c for c in self.s_coeffs),
        )


@dataclass(frozen=True)
class Particle:
    center: tuple
    alpha: float = 0.0
    radius: float = 1.0
    profile: BoundaryProfile = field(default_factory=BoundaryProfile)

    def __post_init__(self):
        c = tuple(float(v) for v in self.center)
        if len(c) != 2:
            raise ValueError("particle center must be a 2-vector")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius > 0:
            raise ValueError(f"particle radius must be positive, got {self.radius}")

    @property
    def X(self) -> np.ndarray:
        return np.array(self.center)

    def forward(self, y) -> np.ndarray:
        """Rigid motion ``X + R(alpha) y`` applied to reference points ``y``."""
        y = np.asarray(y, dtype=float)
        return self.X + y @ rotation(self.alpha).T

    def inverse(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x - self.X) @ rotation(self.alpha)

    def reference_angle(self, x) -> np.ndarray:
        y = self.inverse(x)
        return np.arctan2(y[..., 1], y[..., 0])


def rigid_motion(particle: Particle, y) -> np.ndarray:
    return particle.forward(y)


def inverse_rigid_motion(particle: Particle, x) -> np.ndarray:
    return particle.inverse(x)


def boundary_data(particle: Particle, x) -> tuple[np.ndarray, np.ndarray]:
    """Prescribed contour and slope at points ``x`` of the moved boundary."""
    theta = particle.reference_angle(x)
    return particle.profile.contour(theta), particle.profile.slope(theta)


@dataclass(frozen=True)
class BoundaryQuadrature:
    """Trapezoidal rule on one particle circle.

    ``normals`` follow the module convention (pointing into the particle).
    """

    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    angles: np.ndarray  # angle in the moved frame, measured from the center


def boundary_quadrature(particle: Particle, m: int) -> BoundaryQuadrature:
    t = 2.0 * np.pi * np.arange(m) / m
    radial = np.stack([np.cos(t), np.sin(t)], axis=-1)
    pts = particle.X + particle.radius * radial
    w = np.full(m, 2.0 * np.pi * particle.radius / m)
    return BoundaryQuadrature(pts, -radial, w, t)


@dataclass(frozen=True)
class ParticleConfig:
    """A feasible arrangement of particles in a domain.

    Construct through :func:`make_configuration`, which validates
    feasibility; the raw constructor does not.
    """

    domain: Domain
    particles: tuple

    def __post_init__(self):
        object.__setattr__(self, "particles", tuple(self.particles))

    @property
    def n(self) -> int:
        return len(self.particles)

    @property
    def centers(self) -> np.ndarray:
        return np.array([p.center for p in self.particles], dtype=float).reshape(-1, 2)

    @property
    def radii(self) -> np.ndarray:
        return np.array([p.radius for p in self.particles], dtype=float)

    def coordinates(self) -> np.ndarray:
        """Joint position vector ``(x1, y1, alpha1, ..., xN, yN, alphaN)``."""
        return np.array([v for p in self.particles for v in (*p.center, p.alpha)], dtype=float)

    def with_coordinates(self, q, validate: bool = True) -> "ParticleConfig":
        q = np.asarray(q, dtype=float).reshape(self.n, 3)
        parts = [
            replace(p, center=(qi[0], qi[1]), alpha=qi[2]) for p, qi in zip(self.particles, q)
        ]
        if validate:
            return make_configuration(self.domain, parts)
        return ParticleConfig(self.domain, parts)

    def with_particles(self, particles: Sequence[Particle]) -> "ParticleConfig":
        return ParticleConfig(self.domain, particles)

    def pair_gaps(self) -> np.ndarray:
        """``|X_i - X_j| - (r_i + r_j)``; the diagonal is ``inf``."""
        X, r = self.centers, self.radii
        d = np.linalg.norm(X[:, None, :] - X[None, :, :], axis=-1) - (r[:, None] + r[None, :])
        np.fill_diagonal(d, np.inf)
        return d

    def wall_gaps(self) -> np.ndarray:
        return self.domain.wall_distance(self.centers) - self.radii

    def is_feasible(self) -> bool:
        return min_separation(self) > 0


def make_configuration(domain: Domain, particles: Sequence[Particle]) -> ParticleConfig:
    """Validate particles against the domain and each other.

    Raises
    ------
    EscapesDomain
        If some disk is not strictly inside the domain.
    Overlap
        If two closed disks intersect.
    """
    config = ParticleConfig(domain, particles)
    for i, gap in enumerate(config.wall_gaps()):
        if not gap > 0:
            raise EscapesDomain(i, float(gap))
    gaps = config.pair_gaps()
    for i in range(config.n):
        for j in range(i + 1, config.n):
            if not gaps[i, j] > 0:
                raise Overlap(i, j, float(gaps[i, j]))
    return config


def min_separation(config: ParticleConfig) -> float:
    """Smallest particle-particle or particle-wall distance."""
    if config.n == 0:
        return math.inf
    return float(min(config.pair_gaps().min(), config.wall_gaps().min()))
