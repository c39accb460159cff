"""Membrane minimizer on a fictitious-domain bicubic grid.

The linearized bending/tension energy

    J(u) = 1/2 * int_{Omega_q} kappa (lap u)^2 + sigma |grad u|^2 dx

is minimized over the full rectangle grid; the particles are cut out by
restricting the area quadrature to the membrane region. Contour and slope
coupling along each particle circle is enforced by quadratic penalties that
also involve the free height ``Z_i`` and tilt ``beta_i`` of the particle:

    gamma0 * oint (u - h_i - Z_i - beta_i . (x - X_i))^2 ds
    gamma1 * oint (du/dn - s_i - beta_i . n)^2 ds

with ``gamma0 = alpha0 kappa / h^3`` and ``gamma1 = alpha1 kappa / h``.
The outer boundary is clamped by removing all DOFs of boundary nodes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .element import Mesh, evaluate, gauss_rule, shape_functions, subcell_rule
from .geometry import BoundaryQuadrature, ParticleConfig, boundary_data, boundary_quadrature

logger = logging.getLogger(__name__)

MEMBRANE, PARTICLE, CUT = 0, 1, 2


class SingularSystem(RuntimeError):
    """The discrete system could not be factorized."""


class OutsideMembrane(ValueError):
    """A field was queried at a point not occupied by the membrane."""


@dataclass(frozen=True)
class PhysicsParams:
    kappa: float = 1.0
    sigma: float = 0.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("bending rigidity kappa must be positive")
        if not self.sigma >= 0:
            raise ValueError("tension sigma must be non-negative")


@dataclass(frozen=True)
class Discretization:
    """Numerical parameters of the membrane solve.

    ``ny`` defaults to the value giving (nearly) square cells. ``quad_m``
    is the number of boundary points per particle; ``None`` selects
    ``max(64, 8 * ceil(2 pi r / h))``. ``ghost`` is the relative weight of the
    full-cell energy added on cut cells to keep the system well conditioned.
    With ``smooth_cut`` each subcell contributes a fraction obtained from a
    linear ramp of the signed distance, which makes the discrete energy a
    continuous function of the particle positions; otherwise subcells are
    counted in or out by their centers.
    """

    nx: int = 64
    ny: int | None = None
    subsample: int = 8
    quad_m: int | None = None
    alpha0: float = 1e4
    alpha1: float = 1e4
    tol: float = 1e-8
    ghost: float = 1e-6
    smooth_cut: bool = True

    def __post_init__(self):
        if self.nx < 1 or (self.ny is not None and self.ny < 1):
            raise ValueError("cell counts must be positive")
        if self.subsample < 1:
            raise ValueError("subsample must be positive")
        if not (self.alpha0 > 0 and self.alpha1 > 0 and self.tol > 0):
            raise ValueError("penalty weights and tolerance must be positive")
        if self.ghost < 0:
            raise ValueError("ghost weight must be non-negative")

    def mesh(self, domain) -> Mesh:
        ny = self.ny
        if ny is None:
            ny = max(1, int(round(self.nx * domain.ly / domain.lx)))
        return Mesh(domain, self.nx, ny)

    def boundary_points(self, radius: float, h: float) -> int:
        if self.quad_m is not None:
            return int(self.quad_m)
        return max(64, 8 * math.ceil(2 * math.pi * radius / h))


# --------------------------------------------------------------------------
# cut cells


REFINE = 4  # points per direction inside each subcell


@dataclass(frozen=True)
class CutInfo:
    """Per-cell classification and cut-cell quadrature.

    ``classes`` holds MEMBRANE, PARTICLE or CUT per cell and ``fraction`` the
    membrane area fraction of each cell. Every cut cell is split into
    ``s x s`` subcells, each carrying ``REFINE**2`` points: a tensor Gauss
    rule on subcells lying in the membrane, a midpoint grid with fractional
    weights on subcells crossed by a particle boundary (``straddle``).
    ``cut_weights`` holds the physical weights, shape ``(ncut, s*s*REFINE**2)``.
    """

    classes: np.ndarray
    fraction: np.ndarray
    cut_cells: np.ndarray
    straddle: np.ndarray
    cut_weights: np.ndarray
    subsample: int

    @property
    def n_cut(self) -> int:
        return len(self.cut_cells)

    def local_rules(self):
        return _subcell_points(self.subsample)

    def iter_quadrature(self, mesh: Mesh, positions=None, chunk: int | None = None):
        """Yield ``(positions, xi, eta, weights)`` for blocks of cut cells.

        ``positions`` index into ``cut_cells``; arrays have shape
        ``(block, s*s*REFINE**2)``.
        """
        if positions is None:
            positions = np.arange(self.n_cut)
        positions = np.asarray(positions, dtype=int)
        (gx, gy, _), (mx, my, _) = self.local_rules()
        q = len(gx)
        chunk = chunk or max(1, 2**18 // q)
        for k in range(0, len(positions), chunk):
            pos = positions[k : k + chunk]
            mask = np.repeat(self.straddle[pos], REFINE * REFINE, axis=1)
            xi = np.where(mask, mx, gx)
            eta = np.where(mask, my, gy)
            yield pos, xi, eta, self.cut_weights[pos]


@lru_cache(maxsize=8)
def _subcell_points(s: int):
    """Gauss and midpoint rules of every subcell, flattened subcell-major.

    Returns ``((xi, eta, w), (xi, eta, w))`` on the unit cell for the Gauss
    and the midpoint rule.
    """
    gx, gy, gw = gauss_rule(REFINE)
    mx, my, mw = subcell_rule(REFINE)
    sx, sy, _ = subcell_rule(s)
    ox, oy = sx - 0.5 / s, sy - 0.5 / s
    out = []
    for x, y, w in ((gx, gy, gw), (mx, my, mw)):
        out.append(
            (
                (ox[:, None] + x[None] / s).ravel(),
                (oy[:, None] + y[None] / s).ravel(),
                np.tile(w / (s * s), s * s),
            )
        )
    return tuple(out)


def _signed_distance(points: np.ndarray, config: ParticleConfig):
    """Signed distance to each disk (positive in the membrane) and offsets."""
    X, r = config.centers, config.radii
    diff = points[..., None, :] - X
    return np.linalg.norm(diff, axis=-1) - r, diff


def _ramp(d, diff, ax, ay):
    """Membrane fraction of an ``ax x ay`` box centered at signed distance ``d``.

    Linear in ``d`` across the band where a straight boundary crosses the
    box, which keeps the weights continuous under particle motion.
    """
    dist = np.linalg.norm(diff, axis=-1)
    dist = np.where(dist > 0, dist, 1.0)
    width = (np.abs(diff[..., 0]) * ax + np.abs(diff[..., 1]) * ay) / dist
    return np.clip(0.5 + d / width, 0.0, 1.0), width


def classify_cells(mesh: Mesh, config: ParticleConfig, s: int, smooth: bool = True) -> CutInfo:
    """Classify cells against the particle disks and build cut quadrature.

    Cells are classified exactly: inside a disk when all corners are in the
    closed disk, cut when the disk meets the cell otherwise. Cut cells are
    split into ``s x s`` subcells; the membrane fraction of a cut cell is the
    summed subcell fraction. With ``smooth=False`` quadrature points are
    counted in or out by position instead of ramp-weighted.
    """
    classes = np.zeros(mesh.n_cells, dtype=np.int8)
    hx, hy = mesh.hx, mesh.hy
    for p in config.particles:
        (cx, cy), r = p.center, p.radius
        i0 = max(0, int(math.floor((cx - r) / hx)))
        i1 = min(mesh.nx - 1, int(math.floor((cx + r) / hx)))
        j0 = max(0, int(math.floor((cy - r) / hy)))
        j1 = min(mesh.ny - 1, int(math.floor((cy + r) / hy)))
        ii, jj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
        ii, jj = ii.ravel(), jj.ravel()
        x0, y0 = ii * hx, jj * hy
        near = np.hypot(np.clip(cx, x0, x0 + hx) - cx, np.clip(cy, y0, y0 + hy) - cy)
        far = np.hypot(
            np.maximum(np.abs(x0 - cx), np.abs(x0 + hx - cx)),
            np.maximum(np.abs(y0 - cy), np.abs(y0 + hy - cy)),
        )
        cells = jj * mesh.nx + ii
        inside = far <= r
        cut = (near < r) & ~inside
        classes[cells[inside]] = PARTICLE
        cut_cells = cells[cut]
        classes[cut_cells[classes[cut_cells] != PARTICLE]] = CUT

    cut_cells = np.flatnonzero(classes == CUT)
    t2 = REFINE * REFINE
    (gx, gy, gw), (mx, my, mw) = _subcell_points(s)
    origin = mesh.cell_origin(cut_cells)
    sx, sy, _ = subcell_rule(s)
    centers = origin[:, None, :] + np.stack([sx * hx, sy * hy], -1)[None]
    d, diff = _signed_distance(centers, config)
    _, width = _ramp(d, diff, hx / s, hy / s)
    # 5% slack absorbs the boundary curvature inside one subcell
    straddle = np.any(np.abs(d) < 0.55 * width, axis=-1)
    outside = np.all(d >= 0.55 * width, axis=-1)

    mask = np.repeat(straddle, t2, axis=1)
    xi = np.where(mask, mx, gx)
    eta = np.where(mask, my, gy)
    pts = origin[:, None, :] + np.stack([xi * hx, eta * hy], -1)
    dp, diffp = _signed_distance(pts, config)
    if smooth:
        frac, _ = _ramp(dp, diffp, hx / (s * REFINE), hy / (s * REFINE))
        frac = np.prod(frac, axis=-1)
    else:
        frac = np.all(dp > 0, axis=-1).astype(float)
    frac = np.where(mask, frac, np.repeat(outside, t2, axis=1).astype(float))
    weights = frac * np.where(mask, mw, gw) * (hx * hy)

    fraction = (classes == MEMBRANE).astype(float)
    fraction[cut_cells] = weights.sum(axis=1) / (hx * hy)
    return CutInfo(
        classes=classes,
        fraction=fraction,
        cut_cells=cut_cells,
        straddle=straddle,
        cut_weights=weights,
        subsample=s,
    )


# --------------------------------------------------------------------------
# assembly


@lru_cache(maxsize=8)
def _reference_matrices(hx: float, hy: float):
    """Full-cell Laplacian, gradient and Hessian matrices (16 x 16)."""
    xi, eta, w = gauss_rule(4)
    sv = shape_functions(xi, eta, hx, hy)
    w = w * hx * hy

    def gram(a, b):
        return a.T @ (w[:, None] * b)

    k_lap = gram(sv.lap, sv.lap)
    k_grad = gram(sv.dx, sv.dx) + gram(sv.dy, sv.dy)
    k_hess = gram(sv.dxx, sv.dxx) + 2 * gram(sv.dxy, sv.dxy) + gram(sv.dyy, sv.dyy)
    return k_lap, k_grad, k_hess


def _coo(mesh: Mesh, cells, local: np.ndarray, n: int) -> sp.csr_matrix:
    """Scatter per-cell 16x16 blocks (broadcast if ``local`` is 2D)."""
    dofs = mesh.cell_dofs(cells)
    rows = np.repeat(dofs, 16, axis=1).ravel()
    cols = np.tile(dofs, (1, 16)).ravel()
    if local.ndim == 2:
        vals = np.broadcast_to(local.ravel(), (len(dofs), 256)).ravel()
    else:
        vals = local.reshape(len(dofs), 256).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@lru_cache(maxsize=4)
def _full_grid_matrix(mesh: Mesh, kappa: float, sigma: float) -> sp.csr_matrix:
    k_lap, k_grad, _ = _reference_matrices(mesh.hx, mesh.hy)
    return _coo(mesh, np.arange(mesh.n_cells), kappa * k_lap + sigma * k_grad, mesh.n_dofs)


def _cut_cell_blocks(mesh: Mesh, cut: CutInfo, kappa: float, sigma: float) -> np.ndarray:
    blocks = np.empty((cut.n_cut, 16, 16))
    for pos, xi, eta, w in cut.iter_quadrature(mesh):
        sv = shape_functions(xi, eta, mesh.hx, mesh.hy)
        lap = sv.lap
        b = np.matmul(lap.transpose(0, 2, 1), (kappa * w)[..., None] * lap)
        if sigma:
            for g in (sv.dx, sv.dy):
                b += np.matmul(g.transpose(0, 2, 1), (sigma * w)[..., None] * g)
        blocks[pos] = b
    return blocks


def energy_matrix(mesh: Mesh, cut: CutInfo, physics: PhysicsParams) -> sp.csr_matrix:
    """Stiffness of ``int_{Omega_q} kappa lap u lap v + sigma grad u . grad v``."""
    n = mesh.n_dofs
    k_lap, k_grad, _ = _reference_matrices(mesh.hx, mesh.hy)
    kappa_sigma = physics.kappa * k_lap + physics.sigma * k_grad
    K = _full_grid_matrix(mesh, physics.kappa, physics.sigma)
    nonmem = np.flatnonzero(cut.classes != MEMBRANE)
    if len(nonmem):
        K = K - _coo(mesh, nonmem, kappa_sigma, n)
    if len(cut.cut_cells):
        K = K + _coo(mesh, cut.cut_cells, _cut_cell_blocks(mesh, cut, physics.kappa, physics.sigma), n)
    return K


def ghost_matrix(mesh: Mesh, cut: CutInfo, physics: PhysicsParams, weight: float) -> sp.csr_matrix:
    """Weak full-cell energy on cut cells, scaled by the cut-away fraction."""
    n = mesh.n_dofs
    if weight == 0 or len(cut.cut_cells) == 0:
        return sp.csr_matrix((n, n))
    _, k_grad, k_hess = _reference_matrices(mesh.hx, mesh.hy)
    block = physics.kappa * k_hess + physics.sigma * k_grad
    scale = weight * (1.0 - cut.fraction[cut.cut_cells])
    return _coo(mesh, cut.cut_cells, scale[:, None, None] * block, n)


@dataclass(frozen=True)
class BoundaryRows:
    """Basis values and normal derivatives at one particle's boundary points."""

    quad: BoundaryQuadrature
    dofs: np.ndarray  # (m, 16)
    values: np.ndarray  # (m, 16)
    dx: np.ndarray
    dy: np.ndarray

    @property
    def dn(self) -> np.ndarray:
        n = self.quad.normals
        return self.dx * n[:, :1] + self.dy * n[:, 1:]


def boundary_rows(mesh: Mesh, quad: BoundaryQuadrature) -> BoundaryRows:
    cells, xi, eta = mesh.locate(quad.points)
    sv = shape_functions(xi, eta, mesh.hx, mesh.hy)
    return BoundaryRows(quad, mesh.cell_dofs(cells), sv.v, sv.dx, sv.dy)


def penalty_scatter(rows_idx, rows_val, weights, targets, n):
    """Assemble ``sum_k w_k (r_k . c - t_k)^2`` as matrix and load vector."""
    k = rows_idx.shape[1]
    R = np.repeat(rows_idx, k, axis=1).ravel()
    C = np.tile(rows_idx, (1, k)).ravel()
    V = (weights[:, None, None] * rows_val[:, :, None] * rows_val[:, None, :]).ravel()
    A = sp.csr_matrix((V, (R, C)), shape=(n, n))
    f = np.zeros(n)
    np.add.at(f, rows_idx.ravel(), ((weights * targets)[:, None] * rows_val).ravel())
    return A, f


@dataclass(frozen=True)
class LinearSystem:
    matrix: sp.csr_matrix  # full (membrane + extras) system
    rhs: np.ndarray
    energy: sp.csr_matrix  # membrane energy form, membrane DOFs only
    active: np.ndarray  # indices of free unknowns in the full vector
    n_membrane: int
    mesh: Mesh


def active_dofs(mesh: Mesh, cut: CutInfo) -> np.ndarray:
    """Membrane DOFs not clamped and touching some non-particle cell."""
    live = np.flatnonzero(cut.classes != PARTICLE)
    mask = np.zeros(mesh.n_dofs, dtype=bool)
    mask[mesh.cell_dofs(live).ravel()] = True
    bnodes = mesh.boundary_nodes()
    mask[(4 * bnodes[:, None] + np.arange(4)).ravel()] = False
    return np.flatnonzero(mask)


def assemble_system(mesh: Mesh, cut: CutInfo, config: ParticleConfig, physics: PhysicsParams, disc: Discretization) -> LinearSystem:
    """Assemble the penalized membrane system over membrane DOFs and 3N extras."""
    n_mem = mesh.n_dofs
    n = n_mem + 3 * config.n
    K_energy = energy_matrix(mesh, cut, physics)
    K = K_energy + ghost_matrix(mesh, cut, physics, disc.ghost)
    K = sp.block_diag([K, sp.csr_matrix((3 * config.n, 3 * config.n))], format="csr")
    f = np.zeros(n)
    h = mesh.h
    g0 = disc.alpha0 * physics.kappa / h**3
    g1 = disc.alpha1 * physics.kappa / h
    for i, p in enumerate(config.particles):
        quad = boundary_quadrature(p, disc.boundary_points(p.radius, h))
        br = boundary_rows(mesh, quad)
        hval, sval = boundary_data(p, quad.points)
        m = len(quad.weights)
        extra = n_mem + 3 * i + np.arange(3)
        idx = np.hstack([br.dofs, np.broadcast_to(extra, (m, 3))])
        rel = quad.points - p.X
        vrow = np.hstack([br.values, -np.ones((m, 1)), -rel])
        srow = np.hstack([br.dn, np.zeros((m, 1)), -quad.normals])
        A0, f0 = penalty_scatter(idx, vrow, g0 * quad.weights, hval, n)
        A1, f1 = penalty_scatter(idx, srow, g1 * quad.weights, sval, n)
        K = K + A0 + A1
        f += f0 + f1
    mem_active = active_dofs(mesh, cut)
    active = np.concatenate([mem_active, np.arange(n_mem, n)])
    return LinearSystem(K.tocsr(), f, K_energy.tocsr(), active, n_mem, mesh)


@lru_cache(maxsize=8)
def nested_dissection(nx1: int, ny1: int, leaf: int = 8) -> np.ndarray:
    """Geometric nested-dissection ordering of an ``nx1 x ny1`` node grid.

    Grid lines are used as separators, which is exact for the one-cell
    coupling stencil of the plate element.
    """
    out = []
    stack = [(0, nx1, 0, ny1, False)]
    # explicit stack: (box, emitted-children flag); separators follow subtrees
    while stack:
        i0, i1, j0, j1, done = stack.pop()
        if done:
            if i1 - i0 >= j1 - j0:
                m = (i0 + i1) // 2
                out.append(np.arange(j0, j1) * nx1 + m)
            else:
                m = (j0 + j1) // 2
                out.append(m * nx1 + np.arange(i0, i1))
            continue
        if i1 <= i0 or j1 <= j0:
            continue
        if (i1 - i0) * (j1 - j0) <= leaf * leaf or min(i1 - i0, j1 - j0) < 3:
            ii, jj = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1), indexing="ij")
            out.append((jj * nx1 + ii).ravel())
            continue
        stack.append((i0, i1, j0, j1, True))
        if i1 - i0 >= j1 - j0:
            m = (i0 + i1) // 2
            stack.append((m + 1, i1, j0, j1, False))
            stack.append((i0, m, j0, j1, False))
        else:
            m = (j0 + j1) // 2
            stack.append((i0, i1, m + 1, j1, False))
            stack.append((i0, i1, j0, m, False))
    return np.concatenate(out)


def fill_reducing_order(mesh: Mesh, active: np.ndarray, n_total: int) -> np.ndarray:
    """Positions into ``active`` ordering membrane DOFs by nested dissection."""
    nodes = nested_dissection(mesh.nx + 1, mesh.ny + 1)
    rank = np.empty(n_total, dtype=np.int64)
    dof_rank = (4 * np.argsort(nodes)[:, None] + np.arange(4)).ravel()
    rank[: mesh.n_dofs] = dof_rank
    rank[mesh.n_dofs :] = mesh.n_dofs + np.arange(n_total - mesh.n_dofs)
    return np.argsort(rank[active], kind="stable")


def solve_spd(A: sp.spmatrix, b: np.ndarray, tol: float, order: np.ndarray | None = None) -> np.ndarray:
    """Sparse direct solve of a symmetric positive definite system.

    ``order`` is an optional symmetric fill-reducing permutation, used with
    natural column ordering; without it SuperLU's minimum-degree ordering
    applies.
    """
    if order is None:
        return _solve_spd(A, b, tol, "MMD_AT_PLUS_A")
    x = np.empty_like(b, dtype=float)
    x[order] = _solve_spd(sp.csr_matrix(A)[order][:, order], b[order], tol, "NATURAL")
    return x


def _solve_spd(A: sp.spmatrix, b: np.ndarray, tol: float, permc: str) -> np.ndarray:
    A = sp.csc_matrix(A)
    if A.shape[0] == 0:
        return np.zeros(0)
    diag = A.diagonal()
    if not np.all(diag > 0):
        raise SingularSystem(f"non-positive diagonal entry ({diag.min():.3g})")
    # symmetric diagonal scaling keeps the penalty rows comparable
    d = 1.0 / np.sqrt(diag)
    D = sp.diags(d)
    As = (D @ A @ D).tocsc()
    try:
        lu = spla.splu(As, permc_spec=permc, diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc
    # without row pivoting the pivots of an SPD matrix are all positive
    pivots = lu.U.diagonal()
    if not np.all(pivots > 0):
        raise SingularSystem(f"matrix is not positive definite (pivot {pivots.min():.3g})")
    if b.ndim == 2:
        d = d[:, None]
    bs = d * b
    x = lu.solve(bs)
    bnorm = np.linalg.norm(bs)
    for _ in range(2):
        r = bs - As @ x
        if not np.isfinite(x).all():
            raise SingularSystem("non-finite solution")
        if np.linalg.norm(r) <= tol * max(bnorm, 1e-300):
            break
        x += lu.solve(r)
    res = np.linalg.norm(bs - As @ x)
    if bnorm > 0 and res > tol * bnorm:
        raise SingularSystem(f"residual {res / bnorm:.3g} above tolerance {tol:.3g}")
    return d * x


def solve_reduced(system: LinearSystem, tol: float) -> tuple[np.ndarray, float]:
    a = system.active
    A = system.matrix[a][:, a]
    x = np.zeros(system.matrix.shape[0])
    x[a] = solve_spd(A, system.rhs[a], tol, fill_reducing_order(system.mesh, a, len(x)))
    b = system.rhs[a]
    res = np.linalg.norm(A @ x[a] - b) / np.linalg.norm(b) if np.any(b) else 0.0
    return x, float(res)


# --------------------------------------------------------------------------
# solution


@dataclass(frozen=True)
class MembraneSolution:
    mesh: Mesh
    cut: CutInfo
    config: ParticleConfig
    physics: PhysicsParams
    disc: Discretization
    coeffs: np.ndarray  # membrane DOF vector, length mesh.n_dofs
    heights: np.ndarray  # Z_i
    tilts: np.ndarray  # (N, 2) beta_i
    residual: float
    energy_matrix: sp.csr_matrix = field(repr=False)

    @property
    def energy(self) -> float:
        return energy(self)

    def field(self, points, check: bool = True) -> dict:
        return evaluate_field(self, points, check=check)

    def constraint_residuals(self) -> list[tuple[float, float]]:
        """Per particle ``(oint (u - target)^2 ds, oint (du/dn - target)^2 ds)``."""
        out = []
        for i, p in enumerate(self.config.particles):
            quad = boundary_quadrature(p, self.disc.boundary_points(p.radius, self.mesh.h))
            hval, sval = boundary_data(p, quad.points)
            f = evaluate(self.mesh, self.coeffs, quad.points)
            rel = quad.points - p.X
            vt = hval + self.heights[i] + rel @ self.tilts[i]
            st = sval + quad.normals @ self.tilts[i]
            dn = np.einsum("pk,pk->p", f["grad"], quad.normals)
            out.append(
                (float(quad.weights @ (f["u"] - vt) ** 2), float(quad.weights @ (dn - st) ** 2))
            )
        return out


def solve_membrane(config: ParticleConfig, physics: PhysicsParams, disc: Discretization) -> MembraneSolution:
    """Penalized discrete minimizer of the membrane energy for ``config``."""
    mesh = disc.mesh(config.domain)
    cut = classify_cells(mesh, config, disc.subsample, smooth=disc.smooth_cut)
    system = assemble_system(mesh, cut, config, physics, disc)
    x, res = solve_reduced(system, disc.tol)
    n_mem = system.n_membrane
    extras = x[n_mem:].reshape(-1, 3)
    logger.debug("membrane solve nx=%d: %d unknowns, residual %.2e", mesh.nx, len(system.active), res)
    return MembraneSolution(
        mesh=mesh,
        cut=cut,
        config=config,
        physics=physics,
        disc=disc,
        coeffs=x[:n_mem],
        heights=extras[:, 0].copy(),
        tilts=extras[:, 1:].copy(),
        residual=res,
        energy_matrix=system.energy,
    )


def energy(solution: MembraneSolution) -> float:
    """Membrane energy of the solution over the membrane region, penalties excluded."""
    c = solution.coeffs
    return 0.5 * float(c @ (solution.energy_matrix @ c))


def inside_membrane(config: ParticleConfig, points) -> np.ndarray:
    p = np.atleast_2d(np.asarray(points, dtype=float))
    dom = config.domain
    ok = (p[:, 0] >= 0) & (p[:, 0] <= dom.lx) & (p[:, 1] >= 0) & (p[:, 1] <= dom.ly)
    if config.n:
        d, _ = _signed_distance(p, config)
        ok &= np.all(d > 0, axis=-1)
    return ok


def evaluate_field(solution: MembraneSolution, points, check: bool = True) -> dict:
    """Value, gradient, Hessian and Laplacian of ``u`` at membrane points.

    Raises
    ------
    OutsideMembrane
        If ``check`` and some point lies in a particle or outside the domain.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if check:
        bad = ~inside_membrane(solution.config, points)
        if bad.any():
            raise OutsideMembrane(f"{bad.sum()} point(s) outside the membrane, e.g. {points[bad][0]}")
    return evaluate(solution.mesh, solution.coeffs, points)


# --------------------------------------------------------------------------
# export


def _fmt(v: float) -> str:
    return repr(float(v))


def write_field_csv(solution: MembraneSolution, path) -> None:
    """Nodal field ``x,y,u,ux,uy,lap_u``; nodes inside particles have empty values."""
    mesh = solution.mesh
    xy = mesh.node_coordinates()
    c = solution.coeffs.reshape(-1, 4)
    inside = inside_membrane(solution.config, xy)
    lap = evaluate(mesh, solution.coeffs, xy)["lap"]
    with open(path, "w", newline="\n") as fh:
        fh.write("x,y,u,ux,uy,lap_u\n")
        for k in range(mesh.n_nodes):
            head = f"{_fmt(xy[k, 0])},{_fmt(xy[k, 1])}"
            if inside[k]:
                fh.write(f"{head},{_fmt(c[k, 0])},{_fmt(c[k, 1])},{_fmt(c[k, 2])},{_fmt(lap[k])}\n")
            else:
                fh.write(f"{head},,,,\n")


def write_field_vtk(solution: MembraneSolution, path) -> None:
    """Legacy ASCII structured-points file with nodal ``u`` (NaN in particles)."""
    mesh = solution.mesh
    xy = mesh.node_coordinates()
    u = solution.coeffs.reshape(-1, 4)[:, 0].copy()
    u[~inside_membrane(solution.config, xy)] = np.nan
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\nmembrane field\nASCII\nDATASET STRUCTURED_POINTS\n")
        fh.write(f"DIMENSIONS {mesh.nx + 1} {mesh.ny + 1} 1\n")
        fh.write("ORIGIN 0 0 0\n")
        fh.write(f"SPACING {_fmt(mesh.hx)} {_fmt(mesh.hy)} 1\n")
        fh.write(f"POINT_DATA {mesh.n_nodes}\nSCALARS u double 1\nLOOKUP_TABLE default\n")
        fh.write("\n".join(_fmt(v) for v in u) + "\n")
