"""Pixel-lattice fields and the discrete operators shared by every solver.

Array conventions (unit pixel spacing, displacements in pixels):

* scalar grid   ``(H, W)``
* vector grid   ``(2, H, W)``; component 0 runs along columns (x), 1 along rows (y)
* matrix grid   ``(2, 2, H, W)``; ``M[a, b]`` is the (a, b) entry, e.g.
  ``J[a, b] = d phi_a / d x_b`` for a Jacobian.

A pixel at row ``i`` and column ``j`` sits at the point ``(x, y) = (j, i)``.
"""
from __future__ import annotations

import warnings

import numpy as np
from scipy import ndimage

from .errors import DataError, DegenerateTriangulationError


def as_scalar_grid(a, name="grid"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] < 2 or a.shape[1] < 2:
        raise DataError(f"{name} must be a 2D array of at least 2x2 pixels, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DataError(f"{name} contains non-finite values")
    return a


def _check_same_shape(grid, disp):
    if disp.shape != (2,) + grid.shape:
        raise DataError(f"displacement shape {disp.shape} does not match grid shape {grid.shape}")


def lattice(shape):
    """Return the ``(X, Y)`` coordinate arrays of a ``(H, W)`` lattice."""
    h, w = shape
    Y, X = np.mgrid[0:h, 0:w].astype(float)
    return X, Y


def bilinear_sample(grid, x, y):
    """Bilinear interpolation of ``grid`` at points ``(x, y)``.

    ``x`` and ``y`` may be scalars or arrays of a common shape. Points outside
    the lattice are clamped onto its boundary.
    """
    grid = np.asarray(grid, dtype=float)
    h, w = grid.shape
    x = np.clip(np.asarray(x, dtype=float), 0.0, w - 1.0)
    y = np.clip(np.asarray(y, dtype=float), 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.intp), w - 2)
    y0 = np.minimum(np.floor(y).astype(np.intp), h - 2)
    fx = x - x0
    fy = y - y0
    g00 = grid[y0, x0]
    g01 = grid[y0, x0 + 1]
    g10 = grid[y0 + 1, x0]
    g11 = grid[y0 + 1, x0 + 1]
    top = g00 + fx * (g01 - g00)
    bottom = g10 + fx * (g11 - g10)
    out = top + fy * (bottom - top)
    return out[()] if out.ndim == 0 else out


def warp(grid, disp):
    """Compose ``grid`` with ``Id + disp``: ``out(x) = grid(x + disp(x))``."""
    grid = np.asarray(grid, dtype=float)
    disp = np.asarray(disp, dtype=float)
    _check_same_shape(grid, disp)
    X, Y = lattice(grid.shape)
    return bilinear_sample(grid, X + disp[0], Y + disp[1])


def warp_vector(field, disp):
    """Compose each component of a vector (or stacked) field with ``Id + disp``."""
    field = np.asarray(field, dtype=float)
    return np.stack([warp(c, disp) for c in field])


def gradient(grid):
    """Forward differences, zero across the last row/column (Neumann)."""
    grid = np.asarray(grid, dtype=float)
    g = np.zeros((2,) + grid.shape)
    g[0, :, :-1] = grid[:, 1:] - grid[:, :-1]
    g[1, :-1, :] = grid[1:, :] - grid[:-1, :]
    return g


def central_gradient(grid):
    """Second-order central differences (one-sided on the border)."""
    gy, gx = np.gradient(np.asarray(grid, dtype=float))
    return np.stack([gx, gy])


def divergence(field):
    """Backward-difference divergence, the negative adjoint of :func:`gradient`.

    ``<gradient(u), p> == -<u, divergence(p)>`` holds exactly for every ``u``
    and ``p``.
    """
    p = np.asarray(field, dtype=float)
    px, py = p[0], p[1]
    d = np.zeros(px.shape)
    d[:, 0] += px[:, 0]
    d[:, 1:-1] += px[:, 1:-1] - px[:, :-2]
    d[:, -1] -= px[:, -2]
    d[0, :] += py[0, :]
    d[1:-1, :] += py[1:-1, :] - py[:-2, :]
    d[-1, :] -= py[-2, :]
    return d


def matrix_divergence(M):
    """Row-wise divergence of a matrix grid, returned as a vector grid."""
    M = np.asarray(M, dtype=float)
    return np.stack([divergence(M[0]), divergence(M[1])])


def jacobian(disp):
    """``I + grad U`` per pixel (forward differences)."""
    disp = np.asarray(disp, dtype=float)
    J = np.stack([gradient(disp[0]), gradient(disp[1])])
    J[0, 0] += 1.0
    J[1, 1] += 1.0
    return J


def identity_field(shape):
    I = np.zeros((2, 2) + tuple(shape))
    I[0, 0] = 1.0
    I[1, 1] = 1.0
    return I


def det2(M):
    return M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]


def inv2(M):
    """Per-pixel inverse through the cofactor formula (no singularity check)."""
    d = det2(M)
    return np.stack([
        np.stack([M[1, 1] / d, -M[0, 1] / d]),
        np.stack([-M[1, 0] / d, M[0, 0] / d]),
    ])


def zero_boundary(disp):
    out = np.array(disp, dtype=float, copy=True)
    out[..., 0, :] = 0.0
    out[..., -1, :] = 0.0
    out[..., :, 0] = 0.0
    out[..., :, -1] = 0.0
    return out


def interior_mask(shape, margin=1):
    m = np.zeros(shape, dtype=bool)
    m[margin:shape[0] - margin, margin:shape[1] - margin] = True
    return m


def _rasterize(tri_xy, tri_val, shape):
    """Linear interpolation of per-vertex values onto lattice points.

    ``tri_xy`` is ``(T, 3, 2)``, ``tri_val`` is ``(T, 3, C)``. Later triangles
    overwrite earlier ones where they overlap.
    """
    h, w = shape
    out = np.zeros((tri_val.shape[2], h, w))
    covered = np.zeros((h, w), dtype=bool)

    a, b, c = tri_xy[:, 0], tri_xy[:, 1], tri_xy[:, 2]
    area2 = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    keep = np.abs(area2) > 1e-12
    if not np.any(keep):
        raise DegenerateTriangulationError(
            "all triangles of the forward-mapped lattice are degenerate (collinear scatter)")
    a, b, c, area2 = a[keep], b[keep], c[keep], area2[keep]
    vals = tri_val[keep]

    lo = np.ceil(np.min(tri_xy[keep], axis=1) - 1e-9).astype(np.intp)
    hi = np.floor(np.max(tri_xy[keep], axis=1) + 1e-9).astype(np.intp)
    lo = np.maximum(lo, 0)
    hi[:, 0] = np.minimum(hi[:, 0], w - 1)
    hi[:, 1] = np.minimum(hi[:, 1], h - 1)
    span = hi - lo + 1
    if np.any(span <= 0):
        ok = np.all(span > 0, axis=1)
        a, b, c, area2, vals, lo, hi, span = (t[ok] for t in (a, b, c, area2, vals, lo, hi, span))
    if len(a) == 0:
        return out, covered
    bx, by = int(span[:, 0].max()), int(span[:, 1].max())
    eps = 1e-9
    for oy in range(by):
        for ox in range(bx):
            px = lo[:, 0] + ox
            py = lo[:, 1] + oy
            sel = (px <= hi[:, 0]) & (py <= hi[:, 1])
            if not np.any(sel):
                continue
            pxs, pys = px[sel].astype(float), py[sel].astype(float)
            aa, bb, cc, ar = a[sel], b[sel], c[sel], area2[sel]
            l_b = ((pxs - aa[:, 0]) * (cc[:, 1] - aa[:, 1]) - (pys - aa[:, 1]) * (cc[:, 0] - aa[:, 0])) / ar
            l_c = ((bb[:, 0] - aa[:, 0]) * (pys - aa[:, 1]) - (bb[:, 1] - aa[:, 1]) * (pxs - aa[:, 0])) / ar
            l_a = 1.0 - l_b - l_c
            inside = (l_a >= -eps) & (l_b >= -eps) & (l_c >= -eps)
            if not np.any(inside):
                continue
            v = vals[sel][inside]
            lam = np.stack([l_a[inside], l_b[inside], l_c[inside]], axis=1)
            interp = np.einsum("tk,tkc->tc", lam, v)
            iy, ix = py[sel][inside], px[sel][inside]
            out[:, iy, ix] = interp.T
            covered[iy, ix] = True
    return out, covered


def invert_deformation(disp):
    """Approximate the displacement of ``(Id + disp)^{-1}``.

    Each pixel ``x`` is sent to ``x + U(x)`` carrying the value ``-U(x)``; the
    forward-mapped quads are split into two triangles and the scattered values
    are linearly interpolated back onto the lattice. Lattice points covered by
    no triangle take the value of the nearest covered point.
    """
    disp = np.asarray(disp, dtype=float)
    if disp.ndim != 3 or disp.shape[0] != 2:
        raise DataError(f"displacement must have shape (2, H, W), got {disp.shape}")
    shape = disp.shape[1:]
    d = det2(jacobian(disp))
    if np.any(d <= 0):
        warnings.warn(f"deformation is not orientation preserving at {int(np.sum(d <= 0))} pixels; "
                      "its inverse is approximate", RuntimeWarning, stacklevel=2)
    X, Y = lattice(shape)
    P = np.stack([X + disp[0], Y + disp[1]], axis=-1)
    val = np.moveaxis(-disp, 0, -1)

    p00, p01, p10, p11 = P[:-1, :-1], P[:-1, 1:], P[1:, :-1], P[1:, 1:]
    v00, v01, v10, v11 = val[:-1, :-1], val[:-1, 1:], val[1:, :-1], val[1:, 1:]
    t1 = np.stack([p00, p01, p11], axis=-2).reshape(-1, 3, 2)
    t2 = np.stack([p00, p11, p10], axis=-2).reshape(-1, 3, 2)
    w1 = np.stack([v00, v01, v11], axis=-2).reshape(-1, 3, 2)
    w2 = np.stack([v00, v11, v10], axis=-2).reshape(-1, 3, 2)
    tri = np.concatenate([t1, t2])
    tv = np.concatenate([w1, w2])

    out, covered = _rasterize(tri, tv, shape)
    if not np.all(covered):
        if not np.any(covered):
            raise DegenerateTriangulationError("no lattice point is covered by the forward-mapped mesh")
        _, (iy, ix) = ndimage.distance_transform_edt(~covered, return_indices=True)
        out = out[:, iy, ix]
    return zero_boundary(out)


def composition_residual(disp, inverse, margin=1):
    """Max over interior pixels of ``|phi(phi^{-1}(x)) - x|``."""
    X, Y = lattice(disp.shape[1:])
    qx, qy = X + inverse[0], Y + inverse[1]
    rx = inverse[0] + bilinear_sample(disp[0], qx, qy)
    ry = inverse[1] + bilinear_sample(disp[1], qx, qy)
    r = np.hypot(rx, ry)
    return float(r[interior_mask(r.shape, margin)].max())
