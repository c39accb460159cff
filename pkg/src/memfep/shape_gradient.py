"""Derivatives of the membrane energy with respect to particle motion.

The directional derivative of ``M(q)`` along a rigid motion
``e_i = (E_i, delta_i)`` of particle ``i`` is a volume integral over the
membrane involving the discrete minimizer ``u`` and a vector field ``phi``
that equals the rigid-motion velocity ``E_i + delta_i Q (x - X_i)`` (with
Jacobian ``delta_i Q``) on the boundary of particle ``i`` and vanishes on
all other boundaries:

    dM = int kappa lap(u) (A : D2u - lap(phi) . grad(u) - div(phi) lap(u) / 2)
         + sigma/2 * (A grad u) . grad u,
    A = div(phi) I - Dphi - Dphi^T.

Two vector fields are provided: a radially cut-off rigid motion with
closed-form derivatives (default), and a discrete biharmonic extension.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .element import evaluate, gauss_rule, shape_functions
from .geometry import QUARTER_TURN, ParticleConfig, boundary_quadrature
from .membrane import (
    MEMBRANE,
    PARTICLE,
    Discretization,
    MembraneSolution,
    PhysicsParams,
    active_dofs,
    boundary_rows,
    classify_cells,
    energy_matrix,
    fill_reducing_order,
    ghost_matrix,
    penalty_scatter,
    solve_membrane,
    solve_spd,
)

# Gauss points per direction on uncut cells; the cutoff makes the integrand
# non-polynomial
GAUSS_POINTS = 6


@dataclass(frozen=True)
class Direction:
    """Rigid-motion direction ``(E, delta)`` of a single particle."""

    particle: int
    E: tuple = (0.0, 0.0)
    delta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "E", tuple(float(v) for v in self.E))
        object.__setattr__(self, "delta", float(self.delta))

    def vector(self, n: int) -> np.ndarray:
        e = np.zeros(3 * n)
        e[3 * self.particle : 3 * self.particle + 3] = (*self.E, self.delta)
        return e

    @classmethod
    def unit(cls, particle: int, component: int) -> "Direction":
        """Component 0, 1: unit translation in x, y; component 2: unit rotation rate."""
        E = [0.0, 0.0]
        delta = 0.0
        if component == 2:
            delta = 1.0
        else:
            E[component] = 1.0
        return cls(particle, tuple(E), delta)


def _rigid_velocity(direction: Direction, X: np.ndarray, points: np.ndarray) -> np.ndarray:
    return np.asarray(direction.E) + direction.delta * (points - X) @ QUARTER_TURN.T


def _smoothstep(t):
    """Quintic smoothstep and its first two derivatives on [0, 1]."""
    t = np.clip(t, 0.0, 1.0)
    s = t**3 * (10 - 15 * t + 6 * t * t)
    ds = 30 * t * t * (t - 1) ** 2
    dds = 60 * t * (2 * t - 1) * (t - 1)
    return s, ds, dds


def cutoff_thickness(config: ParticleConfig, i: int) -> float:
    """0.9 times the clearance of particle ``i`` to other particles and walls."""
    clear = config.wall_gaps()[i]
    if config.n > 1:
        clear = min(clear, config.pair_gaps()[i].min())
    return 0.9 * float(clear)


class VectorField:
    """Velocity field with value, Jacobian and Laplacian evaluators.

    ``jac[..., a, b]`` is ``d phi_a / d x_b``.
    """

    config: ParticleConfig
    direction: Direction

    def evaluate(self, points) -> dict:
        raise NotImplementedError

    def support_cells(self, mesh) -> np.ndarray:
        """Cells where the field may be nonzero (and that touch the membrane)."""
        raise NotImplementedError


def derived_quantities(phi: dict) -> dict:
    jac = phi["jac"]
    div = jac[..., 0, 0] + jac[..., 1, 1]
    eye = np.eye(2)
    A = div[..., None, None] * eye - jac - np.swapaxes(jac, -1, -2)
    return {**phi, "div": div, "A": A}


@dataclass(frozen=True)
class CutoffField(VectorField):
    """Rigid-motion velocity times a radial C2 cutoff around particle ``i``.

    The cutoff is 1 within ``eps/2`` of the particle circle and 0 beyond
    ``eps``, with a quintic smoothstep in between.
    """

    config: ParticleConfig
    direction: Direction
    eps: float

    @property
    def particle(self):
        return self.config.particles[self.direction.particle]

    def cutoff(self, points):
        """Cutoff value, gradient and Hessian at points."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        X, r = self.particle.X, self.particle.radius
        rel = p - X
        rho = np.linalg.norm(rel, axis=-1)
        safe = np.where(rho > 0, rho, 1.0)
        xhat = rel / safe[:, None]
        half = 0.5 * self.eps
        dist = np.abs(rho - r)
        sgn = np.sign(rho - r)
        S, dS, ddS = _smoothstep((dist - half) / half)
        g = 1.0 - S
        g1 = -dS / half * sgn
        g2 = -ddS / half**2
        grad = g1[:, None] * xhat
        outer = xhat[:, :, None] * xhat[:, None, :]
        hess = g2[:, None, None] * outer + (g1 / safe)[:, None, None] * (np.eye(2) - outer)
        return g, grad, hess

    def evaluate(self, points) -> dict:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        xi, dxi, hxi = self.cutoff(p)
        d = self.direction
        v = _rigid_velocity(d, self.particle.X, p)
        phi = xi[:, None] * v
        jac = v[:, :, None] * dxi[:, None, :] + d.delta * xi[:, None, None] * QUARTER_TURN
        lap_xi = hxi[:, 0, 0] + hxi[:, 1, 1]
        lap = v * lap_xi[:, None] + 2 * d.delta * dxi @ QUARTER_TURN.T
        return derived_quantities({"phi": phi, "jac": jac, "lap": lap})

    def support_cells(self, mesh) -> np.ndarray:
        X, r = self.particle.X, self.particle.radius
        rmax = r + self.eps
        hx, hy = mesh.hx, mesh.hy
        i0 = max(0, int(math.floor((X[0] - rmax) / hx)))
        i1 = min(mesh.nx - 1, int(math.floor((X[0] + rmax) / hx)))
        j0 = max(0, int(math.floor((X[1] - rmax) / hy)))
        j1 = min(mesh.ny - 1, int(math.floor((X[1] + rmax) / hy)))
        ii, jj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
        ii, jj = ii.ravel(), jj.ravel()
        x0, y0 = ii * hx, jj * hy
        near = np.hypot(np.clip(X[0], x0, x0 + hx) - X[0], np.clip(X[1], y0, y0 + hy) - X[1])
        return np.sort(jj[near <= rmax] * mesh.nx + ii[near <= rmax])


def build_cutoff_field(config: ParticleConfig, i: int, direction) -> CutoffField:
    if not isinstance(direction, Direction):
        E0, E1, delta = direction
        direction = Direction(i, (E0, E1), delta)
    return CutoffField(config, direction, cutoff_thickness(config, i))


@dataclass(frozen=True)
class PdeField(VectorField):
    """Discrete biharmonic extension of the rigid-motion velocity.

    Each component solves the membrane operator with clamped outer boundary,
    with value and full gradient penalized towards the rigid motion on the
    boundary of the moving particle and towards zero on all others.
    """

    config: ParticleConfig
    direction: Direction
    mesh: object
    coeffs: np.ndarray  # (2, n_dofs)
    boundary_residual: float

    def evaluate(self, points) -> dict:
        f0 = evaluate(self.mesh, self.coeffs[0], points)
        f1 = evaluate(self.mesh, self.coeffs[1], points)
        phi = np.stack([f0["u"], f1["u"]], -1)
        jac = np.stack([f0["grad"], f1["grad"]], -2)
        lap = np.stack([f0["lap"], f1["lap"]], -1)
        return derived_quantities({"phi": phi, "jac": jac, "lap": lap})

    def support_cells(self, mesh) -> np.ndarray:
        return np.arange(mesh.n_cells)


def _pde_field_system(config: ParticleConfig, physics: PhysicsParams, disc: Discretization, mesh, cut):
    """Field operator and per-boundary penalty loads for unit value/gradient data."""
    n = mesh.n_dofs
    K = energy_matrix(mesh, cut, physics) + ghost_matrix(mesh, cut, physics, disc.ghost)
    h = mesh.h
    g0 = disc.alpha0 * physics.kappa / h**3
    g1 = disc.alpha1 * physics.kappa / h
    boundaries = []
    for p in config.particles:
        quad = boundary_quadrature(p, disc.boundary_points(p.radius, h))
        br = boundary_rows(mesh, quad)
        for rows, w in ((br.values, g0 * quad.weights), (br.dx, g1 * quad.weights), (br.dy, g1 * quad.weights)):
            A, _ = penalty_scatter(br.dofs, rows, w, np.zeros(len(w)), n)
            K = K + A
        boundaries.append((quad, br, g0 * quad.weights, g1 * quad.weights))
    return K.tocsr(), boundaries


def _pde_load(direction: Direction, config: ParticleConfig, boundaries, n: int) -> np.ndarray:
    """Load vectors (n, 2) pulling the field towards the rigid motion on one boundary."""
    F = np.zeros((n, 2))
    quad, br, w0, w1 = boundaries[direction.particle]
    p = config.particles[direction.particle]
    val = _rigid_velocity(direction, p.X, quad.points)
    grad = direction.delta * QUARTER_TURN
    for k in range(2):
        for rows, w, t in ((br.values, w0, val[:, k]), (br.dx, w1, grad[k, 0]), (br.dy, w1, grad[k, 1])):
            np.add.at(F[:, k], br.dofs.ravel(), ((w * t)[:, None] * rows).ravel())
    return F


def build_pde_fields(
    config: ParticleConfig,
    directions,
    physics: PhysicsParams,
    disc: Discretization,
    cut=None,
) -> list:
    """Discrete extension fields for several directions from one factorization.

    The operator is the membrane energy with value and gradient penalized on
    every particle boundary; only the load depends on the direction.
    """
    mesh = disc.mesh(config.domain)
    if cut is None:
        cut = classify_cells(mesh, config, disc.subsample, smooth=disc.smooth_cut)
    n = mesh.n_dofs
    K, boundaries = _pde_field_system(config, physics, disc, mesh, cut)
    a = active_dofs(mesh, cut)
    loads = np.hstack([_pde_load(d, config, boundaries, n) for d in directions])
    coeffs = np.zeros((n, loads.shape[1]))
    coeffs[a] = solve_spd(K[a][:, a], loads[a], disc.tol, fill_reducing_order(mesh, a, n))
    fields = []
    for k, d in enumerate(directions):
        c = coeffs[:, 2 * k : 2 * k + 2]
        res = 0.0
        for j, (quad, br, _, _) in enumerate(boundaries):
            p = config.particles[j]
            target = _rigid_velocity(d, p.X, quad.points) if j == d.particle else np.zeros((len(quad.weights), 2))
            vals = np.einsum("pa,pak->pk", br.values, c[br.dofs])
            res += float(quad.weights @ ((vals - target) ** 2).sum(axis=1))
        fields.append(PdeField(config, d, mesh, c.T.copy(), res))
    return fields


def build_pde_field(
    config: ParticleConfig, i: int, direction, physics: PhysicsParams, disc: Discretization
) -> PdeField:
    if not isinstance(direction, Direction):
        E0, E1, delta = direction
        direction = Direction(i, (E0, E1), delta)
    return build_pde_fields(config, [direction], physics, disc)[0]


# --------------------------------------------------------------------------
# the derivative formula


def _integrand(u: dict, phi: dict, physics: PhysicsParams) -> np.ndarray:
    lap_u = u["lap"]
    A = phi["A"]
    A_D2u = np.einsum("pab,pab->p", A, u["hess"])
    lapphi_gradu = np.einsum("pa,pa->p", phi["lap"], u["grad"])
    val = physics.kappa * lap_u * (A_D2u - lapphi_gradu - 0.5 * phi["div"] * lap_u)
    if physics.sigma:
        Agu = np.einsum("pab,pb->pa", A, u["grad"])
        val += 0.5 * physics.sigma * np.einsum("pa,pa->p", Agu, u["grad"])
    return val


def directional_derivative(solution: MembraneSolution, field: VectorField) -> float:
    """Shape derivative of the membrane energy along ``field``'s rigid motion."""
    mesh, cut = solution.mesh, solution.cut
    cells = field.support_cells(mesh)
    classes = cut.classes[cells]
    total = 0.0

    full = cells[classes == MEMBRANE]
    if len(full):
        gx, gy, gw = gauss_rule(GAUSS_POINTS)
        sv = shape_functions(gx, gy, mesh.hx, mesh.hy)
        for k in range(0, len(full), 4096):
            blk = full[k : k + 4096]
            c = solution.coeffs[mesh.cell_dofs(blk)]
            pts = (mesh.cell_origin(blk)[:, None, :] + np.stack([gx * mesh.hx, gy * mesh.hy], -1)).reshape(-1, 2)
            u = _fields_from(sv, c)
            total += float(_integrand(u, field.evaluate(pts), solution.physics) @ np.tile(gw * mesh.hx * mesh.hy, len(blk)))

    cutc = cells[classes != MEMBRANE]
    cutc = cutc[cut.classes[cutc] != PARTICLE]
    if len(cutc):
        positions = np.searchsorted(cut.cut_cells, cutc)
        for pos, xi, eta, w in cut.iter_quadrature(mesh, positions):
            keep = w > 0
            cellid = np.broadcast_to(cut.cut_cells[pos][:, None], w.shape)[keep]
            x, y, ww = xi[keep], eta[keep], w[keep]
            sv = shape_functions(x, y, mesh.hx, mesh.hy)
            c = solution.coeffs[mesh.cell_dofs(cellid)]
            pts = mesh.cell_origin(cellid) + np.stack([x * mesh.hx, y * mesh.hy], -1)
            u = _fields_from_pointwise(sv, c)
            total += float(_integrand(u, field.evaluate(pts), solution.physics) @ ww)
    return total


def _fields_from(sv, c):
    """Evaluate fields for blocks of cells sharing local points: c is (ncell, 16)."""
    def ev(B):
        return (c @ B.T).ravel()

    ux, uy = ev(sv.dx), ev(sv.dy)
    uxx, uxy, uyy = ev(sv.dxx), ev(sv.dxy), ev(sv.dyy)
    hess = np.stack([np.stack([uxx, uxy], -1), np.stack([uxy, uyy], -1)], -2)
    return {"grad": np.stack([ux, uy], -1), "hess": hess, "lap": uxx + uyy}


def _fields_from_pointwise(sv, c):
    def ev(B):
        return np.einsum("pa,pa->p", B, c)

    ux, uy = ev(sv.dx), ev(sv.dy)
    uxx, uxy, uyy = ev(sv.dxx), ev(sv.dxy), ev(sv.dyy)
    hess = np.stack([np.stack([uxx, uxy], -1), np.stack([uxy, uyy], -1)], -2)
    return {"grad": np.stack([ux, uy], -1), "hess": hess, "lap": uxx + uyy}


def _batched_integrand(u: dict, vals: dict, physics: PhysicsParams) -> np.ndarray:
    """Integrand for F fields at once; field arrays carry an extra axis after points."""
    jac = np.stack([vals["dx"], vals["dy"]], -1)  # (P, F, 2, 2), [.., k, b] = d phi_k / d x_b
    lap_phi = vals["dxx"] + vals["dyy"]
    div = jac[..., 0, 0] + jac[..., 1, 1]
    A = div[..., None, None] * np.eye(2) - jac - np.swapaxes(jac, -1, -2)
    lap_u = u["lap"][:, None]
    A_D2u = np.einsum("pfab,pab->pf", A, u["hess"])
    lapphi_gradu = np.einsum("pfa,pa->pf", lap_phi, u["grad"])
    val = physics.kappa * lap_u * (A_D2u - lapphi_gradu - 0.5 * div * lap_u)
    if physics.sigma:
        val += 0.5 * physics.sigma * np.einsum("pa,pfab,pb->pf", u["grad"], A, u["grad"])
    return val


def _pde_directional_derivatives(solution: MembraneSolution, fields) -> np.ndarray:
    """Derivatives along several discrete fields in one pass over the membrane."""
    mesh, cut, physics = solution.mesh, solution.cut, solution.physics
    C = np.stack([f.coeffs.T for f in fields], 1)  # (n_dofs, F, 2)
    names = ("dx", "dy", "dxx", "dyy")
    total = np.zeros(len(fields))

    full = np.flatnonzero(cut.classes == MEMBRANE)
    gx, gy, gw = gauss_rule(GAUSS_POINTS)
    sv = shape_functions(gx, gy, mesh.hx, mesh.hy)
    block = 1024
    for k in range(0, len(full), block):
        blk = full[k : k + block]
        dofs = mesh.cell_dofs(blk)
        u = _fields_from(sv, solution.coeffs[dofs])
        cd = C[dofs]  # (ncell, 16, F, 2)
        vals = {n: np.einsum("qa,cafk->cqfk", getattr(sv, n), cd).reshape(-1, *C.shape[1:]) for n in names}
        w = np.tile(gw * mesh.hx * mesh.hy, len(blk))
        total += w @ _batched_integrand(u, vals, physics)

    for pos, xi, eta, w in cut.iter_quadrature(mesh):
        keep = w > 0
        cellid = np.broadcast_to(cut.cut_cells[pos][:, None], w.shape)[keep]
        svp = shape_functions(xi[keep], eta[keep], mesh.hx, mesh.hy)
        dofs = mesh.cell_dofs(cellid)
        u = _fields_from_pointwise(svp, solution.coeffs[dofs])
        cd = C[dofs]
        vals = {n: np.einsum("pa,pafk->pfk", getattr(svp, n), cd) for n in names}
        total += w[keep] @ _batched_integrand(u, vals, physics)
    return total


def _max_workers() -> int:
    try:
        return max(1, int(os.environ.get("MEMFEP_THREADS", "1")))
    except ValueError:
        return 1


FIELD_METHODS = ("pde", "cutoff")


def gradient_from_solution(solution: MembraneSolution, method: str = "pde", symmetry: bool = True) -> np.ndarray:
    """All ``3N`` partial derivatives of ``M`` from one membrane solution.

    ``method="pde"`` (default) uses discrete extension fields, which agree
    with finite differences of the discrete energy to high accuracy;
    ``"cutoff"`` uses the closed-form cutoff fields, whose steep transition
    layer makes the result converge more slowly in the mesh size.

    With ``symmetry``, the rotation component of a particle whose profiles
    are constant is set to exactly zero: its boundary data, and hence the
    discrete problem, do not depend on its angle. Without it, the formula
    is evaluated and returns a small discretization residual.
    """
    config = solution.config
    dirs = [Direction.unit(i, c) for i in range(config.n) for c in range(3)]
    if symmetry:
        dirs = [d for d in dirs if d.delta == 0 or not config.particles[d.particle].profile.is_constant]
    out = np.zeros(3 * config.n)
    if not dirs:
        return out
    slots = [3 * d.particle + (2 if d.delta else (0 if d.E[0] else 1)) for d in dirs]
    if method == "pde":
        fields = build_pde_fields(config, dirs, solution.physics, solution.disc, solution.cut)
        out[slots] = _pde_directional_derivatives(solution, fields)
        return out
    if method != "cutoff":
        raise ValueError(f"unknown field method {method!r}; choose from {FIELD_METHODS}")

    def one(d):
        return directional_derivative(solution, build_cutoff_field(config, d.particle, d))

    workers = min(_max_workers(), len(dirs))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            out[slots] = list(ex.map(one, dirs))
    else:
        out[slots] = [one(d) for d in dirs]
    return out


def gradient(
    config: ParticleConfig,
    physics: PhysicsParams,
    disc: Discretization,
    method: str = "pde",
    symmetry: bool = True,
) -> np.ndarray:
    """Gradient of ``M`` in ``(x1, y1, alpha1, ..., xN, yN, alphaN)`` order."""
    return gradient_from_solution(solve_membrane(config, physics, disc), method, symmetry)


# --------------------------------------------------------------------------
# finite-difference check

FD_HEADER = ("component", "nx", "fd_step", "grad_rep", "fd_value", "rel_mismatch")


def central_difference(config, physics, disc, component: int, step: float) -> float:
    q = config.coordinates()
    e = np.zeros_like(q)
    e[component] = step
    mp = solve_membrane(config.with_coordinates(q + e), physics, disc).energy
    mm = solve_membrane(config.with_coordinates(q - e), physics, disc).energy
    return (mp - mm) / (2 * step)


def fd_check(
    config: ParticleConfig,
    physics: PhysicsParams,
    disc: Discretization,
    steps=(1e-2, 1e-3, 1e-4, 1e-5),
    resolutions=None,
    components=None,
) -> list[dict]:
    """Compare the shape-derivative gradient with central differences of ``M``.

    ``steps`` are relative to the particle radius for translations and
    absolute (radians) for rotations. One row per component, resolution and
    step.
    """
    resolutions = resolutions or (disc.nx,)
    components = range(3 * config.n) if components is None else components
    rows = []
    for nx in resolutions:
        d = _with_nx(disc, nx)
        g = gradient(config, physics, d)
        for comp in components:
            r = config.particles[comp // 3].radius
            for step in steps:
                h = step if comp % 3 == 2 else step * r
                fd = central_difference(config, physics, d, comp, h)
                denom = abs(fd) if fd != 0 else 1.0
                rows.append(
                    {
                        "component": comp,
                        "nx": nx,
                        "fd_step": h,
                        "grad_rep": float(g[comp]),
                        "fd_value": float(fd),
                        "rel_mismatch": abs(g[comp] - fd) / denom,
                    }
                )
    return rows


def _with_nx(disc: Discretization, nx: int) -> Discretization:
    from dataclasses import replace

    ny = None if disc.ny is None else max(1, round(disc.ny * nx / disc.nx))
    return replace(disc, nx=nx, ny=ny)


def best_mismatch(rows, component: int, nx: int) -> float:
    return min(r["rel_mismatch"] for r in rows if r["component"] == component and r["nx"] == nx)


def write_fd_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FD_HEADER)
        for r in rows:
            w.writerow([r["component"], r["nx"]] + [repr(float(r[k])) for k in FD_HEADER[2:]])
