"""2D Ogden stored energy, the V and W sub-problems, and the full objective.

All functions accept matrix fields of shape ``(2, 2, ...)`` so they work on a
single matrix as well as on a ``(2, 2, H, W)`` grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .grid import det2, inv2, jacobian, warp
from .potts import jump_count


@dataclass(frozen=True)
class OgdenParams:
    a1: float = 1.0   # length change
    a2: float = 5e3   # determinant deviation
    a3: float = 0.01  # compression barrier

    def __post_init__(self):
        if min(self.a1, self.a2, self.a3) <= 0:
            raise ValueError("Ogden weights must be strictly positive")


def _frob2(M):
    return np.sum(M * M, axis=(0, 1))


def _cofactor(V):
    # d det / dV
    return np.stack([np.stack([V[1, 1], -V[1, 0]]), np.stack([-V[0, 1], V[0, 0]])])


def ogden_density(V, p):
    V = np.asarray(V, dtype=float)
    d = det2(V)
    ok = d > 0
    dd = np.where(ok, d, 1.0)
    n2 = _frob2(V)
    e = p.a1 * n2 ** 2 + p.a2 * (dd - 1.0) ** 2 + p.a3 / dd ** 10 - 2 * p.a1 - p.a3
    return np.where(ok, e, np.inf)


def ogden_energy(V, p):
    """Sum over pixels of the stored energy; ``inf`` if any ``det V <= 0``."""
    return float(np.sum(ogden_density(V, p)))


def _v_density(V, W, G, p, gamma2, gamma3):
    e = ogden_density(V, p)
    d = det2(V)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = W - inv2(V)
    e = e + 0.5 * gamma2 * _frob2(V - G) + 0.5 * gamma3 * np.where(d > 0, _frob2(r), 0.0)
    return np.where(d > 0, e, np.inf)


def v_energy(V, W, G, p, gamma2, gamma3):
    """Smooth part of the V sub-problem: Ogden + V/grad(phi) and W/V^-1 couplings."""
    return float(np.sum(_v_density(V, W, G, p, gamma2, gamma3)))


def v_gradient(V, W, G, p, gamma2, gamma3):
    V = np.asarray(V, dtype=float)
    d = det2(V)
    if np.any(d <= 0):
        raise NumericalError("v_gradient requires det V > 0 at every pixel")
    cof = _cofactor(V)
    n2 = _frob2(V)
    g = 4 * p.a1 * n2 * V + (2 * p.a2 * (d - 1.0) - 10 * p.a3 / d ** 11) * cof
    g = g + gamma2 * (V - G)
    Vi = inv2(V)
    R = W - Vi
    # d/dV 1/2 |W - V^-1|^2 = V^-T R V^-T
    ViT = np.swapaxes(Vi, 0, 1)
    g = g + gamma3 * np.einsum("ab...,bc...,cd...->ad...", ViT, R, ViT)
    return g


def v_update(V, W, G, p, gamma2, gamma3, alpha, step, max_halvings=10):
    """One projected gradient (forward-backward) step on V.

    The step is halved per pixel, at most ``max_halvings`` times, while the
    trial would make ``det V <= 0`` or raise that pixel's energy; pixels that
    never find an acceptable step keep their value.
    """
    V = np.asarray(V, dtype=float)
    g = v_gradient(V, W, G, p, gamma2, gamma3)
    e0 = _v_density(V, W, G, p, gamma2, gamma3)
    out = V.copy()
    s = np.full(V.shape[2:], float(step))
    pending = np.ones(V.shape[2:], dtype=bool)
    for _ in range(max_halvings + 1):
        trial = np.clip(V - s * g, -alpha, alpha)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            e1 = _v_density(trial, W, G, p, gamma2, gamma3)
        ok = pending & (det2(trial) > 0) & (e1 <= e0)
        out[:, :, ok] = trial[:, :, ok]
        pending &= ~ok
        if not np.any(pending):
            break
        s = np.where(pending, 0.5 * s, s)
    return out


def w_update(V, beta):
    """Box-clamped inverse of V (exact minimizer of the W sub-problem)."""
    V = np.asarray(V, dtype=float)
    if np.any(det2(V) == 0):
        raise NumericalError("w_update requires det V != 0 at every pixel")
    return np.clip(inv2(V), -beta, beta)


ENERGY_TERMS = ("potts_T", "potts_R", "potts_Tt", "coupling", "ogden", "v_fit", "w_fit")


def total_energy(state, cfg):
    """Evaluate the discrete decoupled functional on an atlas state.

    Returns ``(total, terms)`` where ``terms`` maps the names in
    :data:`ENERGY_TERMS` to their contributions (already divided by M).
    ``total`` is ``inf`` when a box constraint or det positivity fails.
    """
    p = cfg.ogden
    M = len(state.templates)
    terms = dict.fromkeys(ENERGY_TERMS, 0.0)
    feasible = True
    lR = jump_count(state.theta_R)
    for i in range(M):
        T = state.templates[i]
        U, V, W = state.U[i], state.V[i], state.W[i]
        tT, tTt = state.theta_T[i], state.theta_Tt[i]
        Tw = warp(T, U)
        tTw = warp(tT, U)
        terms["potts_T"] += cfg.gammaT * jump_count(tT) + cfg.lambdaT * np.sum((tT - T) ** 2)
        terms["potts_R"] += cfg.gammaR * lR + cfg.lambdaR * np.sum((state.theta_R - Tw) ** 2)
        terms["potts_Tt"] += cfg.gammaTtilde * jump_count(tTt)
        terms["coupling"] += 0.5 * cfg.gamma1 * np.sum((tTt - (tTw - state.theta_R)) ** 2)
        if np.any(det2(V) <= 0) or np.max(np.abs(V)) > cfg.alpha or np.max(np.abs(W)) > cfg.beta:
            feasible = False
            continue
        terms["ogden"] += ogden_energy(V, p)
        terms["v_fit"] += 0.5 * cfg.gamma2 * np.sum((V - jacobian(U)) ** 2)
        terms["w_fit"] += 0.5 * cfg.gamma3 * np.sum((W - inv2(V)) ** 2)
    terms = {k: float(v) / M for k, v in terms.items()}
    total = sum(terms.values()) if feasible else float("inf")
    return total, terms
