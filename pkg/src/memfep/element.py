"""Bicubic Hermite (Bogner-Fox-Schmit) plate element on a uniform grid.

Each node carries four degrees of freedom ``(u, u_x, u_y, u_xy)``. The
element space is the tensor product of 1D cubic Hermite polynomials, which
is C1 across element edges and therefore conforming in H2.

Local DOF ordering inside a cell is ``4 * corner + k`` with corners
``(0,0), (1,0), (0,1), (1,1)`` in local ``(xi, eta)`` and ``k`` indexing
``u, u_x, u_y, u_xy``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Domain

# 1D Hermite cubics on [0, 1] as monomial coefficients (1, t, t^2, t^3):
# value at 0, unit slope at 0, value at 1, unit slope at 1
_HERMITE = np.array(
    [
        [1.0, 0.0, -3.0, 2.0],
        [0.0, 1.0, -2.0, 1.0],
        [0.0, 0.0, 3.0, -2.0],
        [0.0, 0.0, -1.0, 1.0],
    ]
)
# (corner along axis, is-derivative) for each 1D function above
_H1D = [(0, 0), (0, 1), (1, 0), (1, 1)]


def _hermite_1d(t: np.ndarray, h: float):
    """Values and first/second x-derivatives of the four 1D functions.

    Derivative-type functions are scaled by ``h`` so their physical slope at
    the node is one.
    """
    t = np.asarray(t, dtype=float)
    one = np.ones_like(t)
    mono = np.stack([one, t, t * t, t**3], axis=-1)
    dmono = np.stack([0 * t, one, 2 * t, 3 * t * t], axis=-1)
    ddmono = np.stack([0 * t, 0 * t, 2 * one, 6 * t], axis=-1)
    scale = np.array([1.0, h, 1.0, h])
    v = mono @ _HERMITE.T * scale
    d = dmono @ _HERMITE.T * scale / h
    dd = ddmono @ _HERMITE.T * scale / h**2
    return v, d, dd


def _local_index():
    """For each of the 16 local DOFs, the 1D function index along x and y."""
    ix, iy = [], []
    for cy in (0, 1):
        for cx in (0, 1):
            for k in range(4):
                dx = k in (1, 3)
                dy = k in (2, 3)
                ix.append(_H1D.index((cx, int(dx))))
                iy.append(_H1D.index((cy, int(dy))))
    return np.array(ix), np.array(iy)


_IX, _IY = _local_index()


@dataclass(frozen=True)
class ShapeValues:
    """Basis functions and derivatives at a set of points, each ``(npts, 16)``."""

    v: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    dxx: np.ndarray
    dxy: np.ndarray
    dyy: np.ndarray

    @property
    def lap(self) -> np.ndarray:
        return self.dxx + self.dyy


def shape_functions(xi, eta, hx: float, hy: float) -> ShapeValues:
    """Evaluate the 16 element basis functions at local coordinates."""
    vx, dx, ddx = _hermite_1d(xi, hx)
    vy, dy, ddy = _hermite_1d(eta, hy)
    vx, dx, ddx = vx[..., _IX], dx[..., _IX], ddx[..., _IX]
    vy, dy, ddy = vy[..., _IY], dy[..., _IY], ddy[..., _IY]
    return ShapeValues(vx * vy, dx * vy, vx * dy, ddx * vy, dx * dy, vx * ddy)


def gauss_rule(n: int):
    """Tensor Gauss-Legendre rule on the unit square: ``(xi, eta, weights)``."""
    t, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    xi, eta = np.meshgrid(t, t, indexing="ij")
    return xi.ravel(), eta.ravel(), np.outer(w, w).ravel()


def subcell_rule(s: int):
    """Midpoints of an ``s x s`` subdivision of the unit square."""
    t = (np.arange(s) + 0.5) / s
    xi, eta = np.meshgrid(t, t, indexing="ij")
    return xi.ravel(), eta.ravel(), np.full(s * s, 1.0 / (s * s))


@dataclass(frozen=True)
class Mesh:
    """Uniform rectangular grid of bicubic Hermite cells."""

    domain: Domain
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("cell counts must be positive")

    @property
    def hx(self) -> float:
        return self.domain.lx / self.nx

    @property
    def hy(self) -> float:
        return self.domain.ly / self.ny

    @property
    def h(self) -> float:
        return max(self.hx, self.hy)

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_dofs(self) -> int:
        return 4 * self.n_nodes

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def node_coordinates(self) -> np.ndarray:
        """Node coordinates in row-major order (x fastest), shape ``(n_nodes, 2)``."""
        x = np.linspace(0.0, self.domain.lx, self.nx + 1)
        y = np.linspace(0.0, self.domain.ly, self.ny + 1)
        X, Y = np.meshgrid(x, y, indexing="xy")
        return np.stack([X.ravel(), Y.ravel()], axis=-1)

    def node_index(self, i, j):
        return np.asarray(j) * (self.nx + 1) + np.asarray(i)

    def cell_ij(self, cells):
        cells = np.asarray(cells)
        return cells % self.nx, cells // self.nx

    def cell_origin(self, cells) -> np.ndarray:
        i, j = self.cell_ij(cells)
        return np.stack([i * self.hx, j * self.hy], axis=-1)

    def cell_dofs(self, cells) -> np.ndarray:
        """Global DOF indices of the given cells, shape ``(ncells, 16)``."""
        i, j = self.cell_ij(np.atleast_1d(cells))
        corners = np.stack(
            [
                self.node_index(i, j),
                self.node_index(i + 1, j),
                self.node_index(i, j + 1),
                self.node_index(i + 1, j + 1),
            ],
            axis=-1,
        )
        return (4 * corners[..., None] + np.arange(4)).reshape(-1, 16)

    def locate(self, points):
        """Cell index and local coordinates of points.

        Points on the top/right boundary are assigned to the last cell.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        fx = p[:, 0] / self.hx
        fy = p[:, 1] / self.hy
        i = np.clip(np.floor(fx).astype(int), 0, self.nx - 1)
        j = np.clip(np.floor(fy).astype(int), 0, self.ny - 1)
        return j * self.nx + i, fx - i, fy - j

    def boundary_nodes(self) -> np.ndarray:
        i = np.arange(self.nx + 1)
        j = np.arange(self.ny + 1)
        nodes = np.concatenate(
            [
                self.node_index(i, 0),
                self.node_index(i, self.ny),
                self.node_index(0, j),
                self.node_index(self.nx, j),
            ]
        )
        return np.unique(nodes)

    def interpolate(self, f, fx, fy, fxy) -> np.ndarray:
        """DOF vector interpolating a smooth function given its derivatives."""
        xy = self.node_coordinates()
        c = np.empty((self.n_nodes, 4))
        for k, g in enumerate((f, fx, fy, fxy)):
            c[:, k] = g(xy[:, 0], xy[:, 1])
        return c.ravel()


def evaluate(mesh: Mesh, coeffs: np.ndarray, points) -> dict:
    """Value, gradient and Hessian of a mesh function at points.

    Returns a dict with ``u`` (n,), ``grad`` (n, 2), ``hess`` (n, 2, 2) and
    ``lap`` (n,).
    """
    cells, xi, eta = mesh.locate(points)
    sv = shape_functions(xi, eta, mesh.hx, mesh.hy)
    c = np.asarray(coeffs)[mesh.cell_dofs(cells)]
    u = np.einsum("pa,pa->p", sv.v, c)
    ux = np.einsum("pa,pa->p", sv.dx, c)
    uy = np.einsum("pa,pa->p", sv.dy, c)
    uxx = np.einsum("pa,pa->p", sv.dxx, c)
    uxy = np.einsum("pa,pa->p", sv.dxy, c)
    uyy = np.einsum("pa,pa->p", sv.dyy, c)
    hess = np.stack([np.stack([uxx, uxy], -1), np.stack([uxy, uyy], -1)], -2)
    return {"u": u, "grad": np.stack([ux, uy], -1), "hess": hess, "lap": uxx + uyy}
