"""PCA of displacement fields under the L2 inner product, and mode-of-variation images."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .grid import warp


def _as_fields(fields):
    F = np.asarray(fields, dtype=float)
    if F.ndim != 4 or F.shape[1] != 2:
        raise DataError(f"expected M vector fields of shape (2, H, W), got array of shape {F.shape}")
    if F.shape[0] < 2:
        raise DataError(f"PCA needs at least 2 fields, got {F.shape[0]}")
    return F


def center(fields):
    F = _as_fields(fields)
    mean = F.mean(axis=0)
    return F - mean, mean


def gram(F):
    """``G[i, j] = sum over pixels of <F_i, F_j>`` (unit pixel area)."""
    flat = F.reshape(len(F), -1)
    G = flat @ flat.T
    return 0.5 * (G + G.T)


def covariance(fields):
    """Gram matrix of the mean-centred fields."""
    Fc, _ = center(fields)
    return gram(Fc)


def jacobi_eigh(A, tol=1e-12, max_sweeps=100):
    """Cyclic Jacobi eigensolver for a small symmetric matrix.

    Sweeps until the off-diagonal Frobenius norm is at most ``tol`` times
    the full norm (absolute ``tol`` for a zero matrix). Returns eigenvalues
    (descending) and eigenvectors as columns.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    scale = max(np.linalg.norm(A), 1.0)
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(A, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if A[p, q] == 0.0:
                    continue
                h = A[q, q] - A[p, p]
                if abs(A[p, q]) * 1e18 < abs(h):
                    t = A[p, q] / h     # small-angle limit, avoids overflow in tau**2
                else:
                    tau = 0.5 * h / A[p, q]
                    t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau)) if tau != 0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                J = np.array([[c, s], [-s, c]])
                idx = [p, q]
                A[:, idx] = A[:, idx] @ J
                A[idx, :] = J.T @ A[idx, :]
                A[p, q] = A[q, p] = 0.0
                V[:, idx] = V[:, idx] @ J
    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


def _fix_signs(E):
    for j in range(E.shape[1]):
        nz = np.flatnonzero(np.abs(E[:, j]) > 1e-12)
        if nz.size and E[nz[0], j] < 0:
            E[:, j] = -E[:, j]
    return E


@dataclass
class PcaResult:
    eigenvalues: np.ndarray    # (M,), descending, clipped at 0
    eigenvectors: np.ndarray   # (M, M), columns
    modes: np.ndarray          # (K, 2, H, W), unit L2 norm, one per positive eigenvalue
    mean: np.ndarray           # (2, H, W)

    @property
    def explained_variance_ratio(self):
        tot = self.eigenvalues.sum()
        return self.eigenvalues / tot if tot > 0 else np.zeros_like(self.eigenvalues)

    def project(self, fields):
        """Coefficients of (uncentred) fields on the modes."""
        F = np.asarray(fields, dtype=float) - self.mean
        return F.reshape(len(F), -1) @ self.modes.reshape(len(self.modes), -1).T

    def reconstruct(self, coeffs):
        return self.mean + np.tensordot(coeffs, self.modes, axes=(1, 0))


def principal_modes(C, centered, rel_tol=1e-12):
    """Eigen-decompose ``C`` and map eigenvectors back to unit-norm fields.

    Eigenvalues at or below ``rel_tol`` times the largest carry no direction
    and get no mode.
    """
    F = np.asarray(centered, dtype=float)
    w, E = jacobi_eigh(C)
    w = np.where(w < 0, 0.0, w)
    E = _fix_signs(E)
    keep = w > rel_tol * max(w[0], 0.0) if w[0] > 0 else np.zeros_like(w, dtype=bool)
    modes = []
    for j in np.flatnonzero(keep):
        m = np.tensordot(E[:, j], F, axes=(0, 0))
        modes.append(m / np.linalg.norm(m))
    modes = np.stack(modes) if modes else np.zeros((0,) + F.shape[1:])
    return PcaResult(eigenvalues=w, eigenvectors=E, modes=modes, mean=np.zeros(F.shape[1:]))


def pca(fields):
    Fc, mean = center(fields)
    res = principal_modes(gram(Fc), Fc)
    res.mean = mean
    return res


def synthesize_mode(theta_R, mode, c, scale=50.0):
    """``theta_R`` warped by ``scale * c * mode``."""
    return warp(theta_R, scale * c * np.asarray(mode, dtype=float))


def mode_sweep(theta_R, mode, scale=50.0, cs=range(-5, 6)):
    return [(c, synthesize_mode(theta_R, mode, c, scale)) for c in cs]
