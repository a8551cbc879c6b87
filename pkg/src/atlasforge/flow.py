"""The deformation sub-problem: one implicit Euler step of an L2 gradient flow."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .errors import SolverError
from .grid import (bilinear_sample, central_gradient, jacobian, lattice, matrix_divergence, warp,
                   zero_boundary)


def _sample_at(field, U):
    X, Y = lattice(U.shape[1:])
    qx, qy = X + U[0], Y + U[1]
    return np.stack([bilinear_sample(c, qx, qy) for c in field])


def el_residual(U, V, thetaT, thetaR, thetaTt, T, cfg):
    """Explicit part of the Euler-Lagrange operator in U.

    ``gamma1 grad(thetaT)o phi (thetaT o phi - thetaR - thetaTt)
    + lambdaR (T o phi - thetaR) grad(T) o phi + gamma2 div V`` (row-wise
    divergence), zero on the boundary ring. Gradients are taken on the
    undeformed grids and then sampled at ``phi(x)``.
    """
    tTw = warp(thetaT, U)
    Tw = warp(T, U)
    g_theta = _sample_at(central_gradient(thetaT), U)
    g_T = _sample_at(central_gradient(T), U)
    force = (cfg.gamma1 * g_theta * (tTw - thetaR - thetaTt)
             + cfg.lambdaR * (Tw - thetaR) * g_T
             + cfg.gamma2 * matrix_divergence(V))
    return zero_boundary(force)


@lru_cache(maxsize=8)
def _implicit_operator(shape, coef):
    """``I - coef * Laplacian`` on interior pixels with zero Dirichlet boundary."""
    h, w = shape[0] - 2, shape[1] - 2

    def lap1d(n):
        return sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1])

    L = sp.kron(sp.identity(h), lap1d(w)) + sp.kron(lap1d(h), sp.identity(w))
    return (sp.identity(h * w) - coef * L).tocsr()


def phi_step(U, forcing, cfg, dt=None):
    """Solve ``(I - dt gamma2 Lap) U_new = U - dt forcing`` per component by CG."""
    dt = cfg.dt if dt is None else dt
    U = np.asarray(U, dtype=float)
    shape = U.shape[1:]
    if min(shape) < 3:
        return np.zeros_like(U)
    A = _implicit_operator(shape, float(dt * cfg.gamma2))
    out = np.zeros_like(U)
    for c in range(2):
        rhs = (U[c] - dt * forcing[c])[1:-1, 1:-1].ravel()
        x0 = U[c][1:-1, 1:-1].ravel()
        if not np.any(rhs):
            continue
        x, info = cg(A, rhs, x0=x0, rtol=cfg.cg_tol, atol=0.0, maxiter=20 * A.shape[0])
        if info != 0:
            res = np.linalg.norm(A @ x - rhs) / np.linalg.norm(rhs)
            raise SolverError(f"conjugate gradient did not converge (relative residual {res:.3g})")
        out[c][1:-1, 1:-1] = x.reshape(shape[0] - 2, shape[1] - 2)
    return out


def phi_objective(U, V, thetaT, thetaR, thetaTt, T, cfg):
    """The deformation block of the objective, with V, thetas fixed."""
    Tw = warp(T, U)
    tTw = warp(thetaT, U)
    return float(cfg.lambdaR * np.sum((thetaR - Tw) ** 2)
                 + 0.5 * cfg.gamma1 * np.sum((thetaTt - tTw + thetaR) ** 2)
                 + 0.5 * cfg.gamma2 * np.sum((V - jacobian(U)) ** 2))
