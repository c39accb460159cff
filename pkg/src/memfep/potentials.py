"""Direct soft-wall potentials and the full interaction potential.

The direct potential is a Lennard-Jones term on the gap between particle
disks plus a repulsive wall term,

    P(q) = sum_{i != j} 4 eps_ij [(sig_ij / d_ij)^12 - (sig_ij / d_ij)^6]
           + sum_i (sig_i / d_i)^6,

with ``d_ij = |X_i - X_j| - (r_i + r_j)`` and ``d_i`` the clearance of disk
``i`` from the domain boundary. The pair sum runs over ordered pairs, so each
unordered pair contributes twice. Infeasible states have ``P = +inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ParticleConfig
from .membrane import Discretization, PhysicsParams, solve_membrane
from .shape_gradient import gradient_from_solution


def _symmetric(a, n: int, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = np.full((n, n), float(a))
    if a.shape != (n, n):
        raise ValueError(f"{name} must be a scalar or an {n}x{n} matrix")
    if not np.allclose(a, a.T, rtol=0, atol=0):
        raise ValueError(f"{name} must be symmetric")
    return a


@dataclass(frozen=True, eq=False)
class SoftWallParams:
    """Pair strengths ``eps``, pair lengths ``sigma_pair`` and wall lengths ``sigma_wall``.

    Scalars are broadcast. Diagonal entries of the pair matrices are unused.
    """

    eps: np.ndarray
    sigma_pair: np.ndarray
    sigma_wall: np.ndarray

    @classmethod
    def uniform(cls, n: int, eps: float = 1.0, sigma_pair: float = 0.2, sigma_wall: float = 0.2):
        return cls.build(n, eps, sigma_pair, sigma_wall)

    @classmethod
    def build(cls, n: int, eps, sigma_pair, sigma_wall) -> "SoftWallParams":
        e = _symmetric(eps, n, "eps")
        sp = _symmetric(sigma_pair, n, "sigma_pair")
        sw = np.asarray(sigma_wall, dtype=float)
        sw = np.full(n, float(sw)) if sw.ndim == 0 else sw
        if sw.shape != (n,):
            raise ValueError(f"sigma_wall must be a scalar or a length-{n} vector")
        off = ~np.eye(n, dtype=bool)
        if np.any(e[off] < 0):
            raise ValueError("eps must be nonnegative")
        if np.any(sp[off] <= 0) or np.any(sw <= 0):
            raise ValueError("length scales must be positive")
        return cls(e, sp, sw)

    @property
    def n(self) -> int:
        return self.sigma_wall.size

    def scaled_eps(self, factor: float) -> "SoftWallParams":
        return SoftWallParams(self.eps * factor, self.sigma_pair, self.sigma_wall)


def _pair_gap(config: ParticleConfig, i: int, j: int) -> float:
    p, q = config.particles[i], config.particles[j]
    return math.hypot(p.center[0] - q.center[0], p.center[1] - q.center[1]) - p.radius - q.radius


def _lj(d: float, eps: float, sigma: float) -> tuple[float, float]:
    """LJ value and derivative with respect to the gap ``d``."""
    if not d > 0:
        return math.inf, math.nan
    s6 = (sigma / d) ** 6
    return 4.0 * eps * (s6 * s6 - s6), -24.0 * eps * (2.0 * s6 * s6 - s6) / d


def lj_pair(config: ParticleConfig, i: int, j: int, params: SoftWallParams) -> float:
    if i == j:
        raise ValueError("lj_pair needs two distinct particles")
    return _lj(_pair_gap(config, i, j), params.eps[i, j], params.sigma_pair[i, j])[0]


def _wall(config: ParticleConfig, i: int, params: SoftWallParams):
    """Wall term, its derivative in the clearance, and the clearance gradient."""
    p = config.particles[i]
    x, y = p.center
    lx, ly = config.domain.lx, config.domain.ly
    dists = (x, lx - x, y, ly - y)
    normals = ((1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0))
    k = int(np.argmin(dists))
    d = dists[k] - p.radius
    if not d > 0:
        return math.inf, math.nan, np.array(normals[k])
    t = (params.sigma_wall[i] / d) ** 6
    return t, -6.0 * t / d, np.array(normals[k])


def wall_term(config: ParticleConfig, i: int, params: SoftWallParams) -> float:
    return _wall(config, i, params)[0]


def direct_potential(config: ParticleConfig, params: SoftWallParams) -> tuple[float, np.ndarray]:
    """``P`` and its gradient over ``(x, y, alpha)`` per particle.

    At infeasible states the value is ``inf`` and the gradient is NaN.
    """
    n = config.n
    if params.n != n:
        raise ValueError(f"soft-wall parameters are for {params.n} particles, config has {n}")
    grad = np.zeros((n, 3))
    total = 0.0
    X = config.centers
    for i in range(n):
        for j in range(i + 1, n):
            v, dv = _lj(_pair_gap(config, i, j), params.eps[i, j], params.sigma_pair[i, j])
            if math.isinf(v):
                return math.inf, np.full(3 * n, np.nan)
            # ordered double sum: (i, j) and (j, i) contribute equally
            total += 2.0 * v
            e = (X[i] - X[j]) / np.linalg.norm(X[i] - X[j])
            grad[i, :2] += 2.0 * dv * e
            grad[j, :2] -= 2.0 * dv * e
        w, dw, dd = _wall(config, i, params)
        if math.isinf(w):
            return math.inf, np.full(3 * n, np.nan)
        total += w
        grad[i, :2] += dw * dd
    return total, grad.ravel()


@dataclass(frozen=True)
class PotentialModel:
    """Everything needed to evaluate ``E = M + P`` at a configuration.

    ``membrane=False`` drops ``M``; ``softwall=None`` drops ``P``.
    """

    physics: PhysicsParams = field(default_factory=PhysicsParams)
    disc: Discretization = field(default_factory=Discretization)
    softwall: SoftWallParams | None = None
    membrane: bool = True

    def with_softwall(self, softwall):
        return PotentialModel(self.physics, self.disc, softwall, self.membrane)

    def with_physics(self, physics):
        return PotentialModel(physics, self.disc, self.softwall, self.membrane)


def _membrane_terms(config, model: PotentialModel, with_grad: bool):
    if not model.membrane or config.n == 0:
        return 0.0, np.zeros(3 * config.n)
    sol = solve_membrane(config, model.physics, model.disc)
    g = gradient_from_solution(sol) if with_grad else None
    return sol.energy, g


def _direct_terms(config, model: PotentialModel):
    if model.softwall is None:
        return 0.0, np.zeros(3 * config.n)
    return direct_potential(config, model.softwall)


def model_energy(config: ParticleConfig, model: PotentialModel) -> float:
    """``E(q)`` without its gradient; one membrane solve at most."""
    p, _ = _direct_terms(config, model)
    if math.isinf(p):
        return math.inf
    m, _ = _membrane_terms(config, model, with_grad=False)
    return m + p


def model_energy_and_gradient(config: ParticleConfig, model: PotentialModel):
    p, gp = _direct_terms(config, model)
    if math.isinf(p):
        return math.inf, gp
    m, gm = _membrane_terms(config, model, with_grad=True)
    return m + p, gm + gp


def full_potential(
    config: ParticleConfig,
    physics: PhysicsParams,
    disc: Discretization,
    params: SoftWallParams | None,
    membrane: bool = True,
) -> tuple[float, np.ndarray]:
    """``E = M + P`` and ``grad E = grad M + grad P``."""
    return model_energy_and_gradient(config, PotentialModel(physics, disc, params, membrane))


def hamiltonian(config: ParticleConfig, velocities, model: PotentialModel) -> float:
    """Separable Hamiltonian ``E(q) + |p|^2 / 2``."""
    p = np.asarray(velocities, dtype=float).ravel()
    if p.size != 3 * config.n:
        raise ValueError(f"expected {3 * config.n} velocity components, got {p.size}")
    return model_energy(config, model) + 0.5 * float(p @ p)
