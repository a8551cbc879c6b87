"""Smoothing-spline projection of displacement fields onto a bicubic Hermite space.

The fitted field minimizes an H3 seminorm penalty plus least-squares misfits
to displacement values and to Green-Lagrange strain samples. The space is
built from Bogner-Fox-Schmit rectangles: four DOFs per mesh node (value,
d/dx, d/dy, d2/dxdy), C1 across element edges.

Coordinates are pixel coordinates: ``x`` is the column index, ``y`` the row
index, and the mesh spans ``[0, W-1] x [0, H-1]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import polynomial as P
from scipy.sparse.linalg import spsolve

from .errors import ConfigError, DataError, SolverError
from .grid import central_gradient, lattice

# Ascending-power coefficients of the 1D cubic Hermite functions on [0, 1],
# indexed [end][kind] with kind 0 = value, 1 = slope.
_HERMITE = (
    (np.array([1.0, 0.0, -3.0, 2.0]), np.array([0.0, 1.0, -2.0, 1.0])),
    (np.array([0.0, 0.0, 3.0, -2.0]), np.array([0.0, 0.0, -1.0, 1.0])),
)
# local DOF k -> (x kind, y kind)
_KINDS = ((0, 0), (1, 0), (0, 1), (1, 1))
_CORNERS = ((0, 0), (1, 0), (0, 1), (1, 1))
# H3 seminorm: (x order, y order, multinomial weight)
_H3_TERMS = ((3, 0, 1.0), (2, 1, 3.0), (1, 2, 3.0), (0, 3, 1.0))


@dataclass(frozen=True)
class SplineConfig:
    epsilon: float = 1e-2
    gamma_fit: float = 1.0
    cells_x: int = 16
    cells_y: int = 16
    quad_order: int = 4

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError(f"spline epsilon must be > 0, got {self.epsilon}")
        if self.gamma_fit < 0:
            raise ConfigError(f"spline gamma_fit must be >= 0, got {self.gamma_fit}")
        if self.cells_x < 1 or self.cells_y < 1:
            raise ConfigError("spline mesh needs at least one cell per direction")
        if self.quad_order < 4:
            raise ConfigError(f"quadrature order {self.quad_order} cannot integrate the degree-6 "
                              "seminorm integrands exactly; use >= 4")


@dataclass(frozen=True)
class Mesh:
    cells_x: int
    cells_y: int
    width: float     # extent in x
    height: float    # extent in y

    @classmethod
    def for_shape(cls, shape, cells_x=16, cells_y=16):
        h, w = shape
        return cls(cells_x, cells_y, float(w - 1), float(h - 1))

    @property
    def hx(self):
        return self.width / self.cells_x

    @property
    def hy(self):
        return self.height / self.cells_y

    @property
    def n_nodes(self):
        return (self.cells_x + 1) * (self.cells_y + 1)

    @property
    def n_dofs(self):
        return 4 * self.n_nodes

    def node(self, jx, jy):
        return jy * (self.cells_x + 1) + jx

    def cell_dofs(self, ix, iy):
        """Global DOF numbers of the 16 local DOFs of cell ``(ix, iy)``."""
        ix = np.asarray(ix)
        iy = np.asarray(iy)
        out = []
        for cx, cy in _CORNERS:
            n = self.node(ix + cx, iy + cy)
            out.extend(4 * n + k for k in range(4))
        return np.stack(out, axis=-1)

    def locate(self, x, y):
        """Cell indices and local coordinates in [0, 1] for points in the mesh."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        tol = 1e-9 * max(self.width, self.height, 1.0)
        bad = (x < -tol) | (x > self.width + tol) | (y < -tol) | (y > self.height + tol)
        if np.any(bad):
            k = np.flatnonzero(np.ravel(bad))[0]
            raise DataError(f"point ({np.ravel(x)[k]}, {np.ravel(y)[k]}) lies outside the "
                            f"mesh [0, {self.width}] x [0, {self.height}]")
        ix = np.clip(np.floor(x / self.hx).astype(int), 0, self.cells_x - 1)
        iy = np.clip(np.floor(y / self.hy).astype(int), 0, self.cells_y - 1)
        return ix, iy, x / self.hx - ix, y / self.hy - iy


def _hermite(end, kind, t, deriv, h):
    c = _HERMITE[end][kind] * (h if kind else 1.0)
    if deriv > 3:
        return np.zeros_like(np.asarray(t, dtype=float))
    if deriv:
        c = P.polyder(c, deriv)
    return P.polyval(t, c) / h ** deriv


def _local_basis(t, s, dx, dy, hx, hy):
    """Values of the 16 local basis functions, stacked on the last axis."""
    out = []
    for cx, cy in _CORNERS:
        for kx, ky in _KINDS:
            out.append(_hermite(cx, kx, t, dx, hx) * _hermite(cy, ky, s, dy, hy))
    return np.stack(out, axis=-1)


def bfs_basis_eval(mesh, cell, dof_index, point, deriv=(0, 0)):
    """Evaluate one local shape function (or a partial derivative) of a cell.

    ``dof_index = 4 * corner + k`` with corners ordered (0,0), (1,0), (0,1),
    (1,1) in (x, y) and ``k`` in (value, d/dx, d/dy, d2/dxdy).
    """
    ix, iy = cell
    if not (0 <= ix < mesh.cells_x and 0 <= iy < mesh.cells_y):
        raise DataError(f"cell {cell} is not in the mesh")
    if not 0 <= dof_index < 16:
        raise ValueError("dof_index must be in 0..15")
    x, y = point
    t = x / mesh.hx - ix
    s = y / mesh.hy - iy
    if not (-1e-9 <= t <= 1 + 1e-9 and -1e-9 <= s <= 1 + 1e-9):
        raise DataError(f"point {point} is not inside cell {cell}")
    (cx, cy), (kx, ky) = _CORNERS[dof_index // 4], _KINDS[dof_index % 4]
    dx, dy = deriv
    return float(_hermite(cx, kx, t, dx, mesh.hx) * _hermite(cy, ky, s, dy, mesh.hy))


@dataclass
class StrainSamples:
    points: np.ndarray   # (N, 2) as (x, y)
    x: np.ndarray        # (2, N) displacement values
    w: np.ndarray        # (2, 2, N) symmetric strain

    @property
    def n(self):
        return self.points.shape[0]


def green_strain(G):
    """``G + G^T + G^T G`` for a (2, 2, ...) displacement gradient."""
    G = np.asarray(G, dtype=float)
    Gt = np.swapaxes(G, 0, 1)
    return G + Gt + np.einsum("ba...,bc...->ac...", G, G)


def strain_samples(U):
    """Displacement values and Green strains at every pixel of ``U``."""
    U = np.asarray(U, dtype=float)
    shape = U.shape[1:]
    X, Y = lattice(shape)
    G = np.stack([central_gradient(U[0]), central_gradient(U[1])])
    w = green_strain(G)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return StrainSamples(points=pts, x=U.reshape(2, -1).copy(), w=w.reshape(2, 2, -1))


def point_matrix(mesh, points, deriv=(0, 0)):
    """Sparse matrix whose row ``i`` holds all basis functions (or a derivative) at point ``i``."""
    points = np.asarray(points, dtype=float)
    ix, iy, t, s = mesh.locate(points[:, 0], points[:, 1])
    vals = _local_basis(t, s, deriv[0], deriv[1], mesh.hx, mesh.hy)
    cols = mesh.cell_dofs(ix, iy)
    rows = np.repeat(np.arange(len(points)), 16)
    return sp.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(len(points), mesh.n_dofs))


@lru_cache(maxsize=32)
def _element_seminorm(hx, hy, order):
    g, gw = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (g + 1.0)
    wt = 0.5 * gw
    T, S = np.meshgrid(t, t, indexing="ij")
    Wq = np.outer(wt, wt) * hx * hy
    K = np.zeros((16, 16))
    for dx, dy, c in _H3_TERMS:
        B = _local_basis(T, S, dx, dy, hx, hy)         # (q, q, 16)
        K += c * np.einsum("ij,ija,ijb->ab", Wq, B, B)
    return K


def seminorm_matrix(mesh, quad_order=4):
    """Global Gram matrix of the H3 seminorm (weights 1, 3, 3, 1)."""
    Ke = _element_seminorm(mesh.hx, mesh.hy, quad_order)
    iy, ix = np.meshgrid(np.arange(mesh.cells_y), np.arange(mesh.cells_x), indexing="ij")
    dofs = mesh.cell_dofs(ix.ravel(), iy.ravel())       # (cells, 16)
    rows = np.repeat(dofs, 16, axis=1).ravel()
    cols = np.tile(dofs, (1, 16)).ravel()
    vals = np.tile(Ke.ravel(), dofs.shape[0])
    R = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_dofs, mesh.n_dofs))
    return 0.5 * (R + R.T)


@dataclass
class SplineSystem:
    mesh: Mesh
    A: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix
    R: sp.csr_matrix
    K: sp.csr_matrix
    rhs: np.ndarray


def assemble_system(samples: StrainSamples, mesh: Mesh, cfg: SplineConfig):
    A = point_matrix(mesh, samples.points, (1, 0))
    B = point_matrix(mesh, samples.points, (0, 1))
    C = point_matrix(mesh, samples.points, (0, 0))
    R = seminorm_matrix(mesh, cfg.quad_order)
    g, e = cfg.gamma_fit, cfg.epsilon
    AtA, BtB, CtC = A.T @ A, B.T @ B, C.T @ C
    BtA = B.T @ A
    K11 = 2 * g * AtA + g * BtB + CtC + e * R
    K22 = g * AtA + 2 * g * BtB + CtC + e * R
    K = sp.bmat([[K11, g * BtA], [g * BtA.T, K22]], format="csr")
    w11, w12, w22 = samples.w[0, 0], samples.w[0, 1], samples.w[1, 1]
    x1, x2 = samples.x
    rhs = np.concatenate([g * (A.T @ w11) + g * (B.T @ w12) + C.T @ x1,
                          g * (A.T @ w12) + g * (B.T @ w22) + C.T @ x2])
    return SplineSystem(mesh, A, B, C, R, K, rhs)


def solve_system(system):
    with np.errstate(all="raise"):
        try:
            alpha = spsolve(system.K.tocsc(), system.rhs)
        except (FloatingPointError, RuntimeError) as exc:
            raise SolverError(f"spline system is singular: {exc}") from exc
    if not np.all(np.isfinite(alpha)):
        raise SolverError("spline system is singular (non-finite solution)")
    return alpha.reshape(2, -1)


def solve_spline(U, cfg: SplineConfig = SplineConfig(), mesh=None):
    """Fit the spline to ``U``; returns ``(coefficients (2, n_dofs), smooth field (2, H, W))``."""
    U = np.asarray(U, dtype=float)
    shape = U.shape[1:]
    mesh = mesh or Mesh.for_shape(shape, cfg.cells_x, cfg.cells_y)
    samples = strain_samples(U)
    system = assemble_system(samples, mesh, cfg)
    coef = solve_system(system)
    field = np.stack([system.C @ coef[0], system.C @ coef[1]]).reshape((2,) + shape)
    return coef, field


def eval_spline(coef, mesh, point):
    """Value of the fitted vector field at ``point = (x, y)``."""
    C = point_matrix(mesh, np.asarray(point, dtype=float).reshape(1, 2))
    return np.array([(C @ coef[0])[0], (C @ coef[1])[0]])


def data_misfit(coef, system, samples):
    """Sum of squared value residuals at the data points."""
    r = np.stack([system.C @ coef[0], system.C @ coef[1]]) - samples.x
    return float(np.sum(r * r))


def seminorm(coef, system):
    return float(sum(c @ (system.R @ c) for c in coef))
