"""Alternating minimization for joint segmentation, registration and atlas generation."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import AtlasConfig
from .errors import AtlasforgeError, DataError
from .flow import el_residual, phi_step
from .grid import (as_scalar_grid, composition_residual, det2, identity_field, inv2, invert_deformation,
                   jacobian, warp)
from .ogden import total_energy, v_update, w_update
from .potts import potts_2d

log = logging.getLogger(__name__)


class AtlasError(AtlasforgeError):
    """A sub-step failed; ``trace`` holds the energy records gathered so far."""

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace or []


@dataclass
class AtlasState:
    templates: np.ndarray      # (M, H, W)
    theta_T: np.ndarray        # (M, H, W)
    theta_Tt: np.ndarray       # (M, H, W)
    theta_R: np.ndarray        # (H, W)
    U: np.ndarray              # (M, 2, H, W)
    V: np.ndarray              # (M, 2, 2, H, W)
    W: np.ndarray              # (M, 2, 2, H, W)
    Ubar: np.ndarray           # (M, 2, H, W), inverse displacements from the last step 2.1
    iteration: int = 0
    trace: list = field(default_factory=list)

    @property
    def M(self):
        return len(self.templates)

    @property
    def shape(self):
        return self.theta_R.shape


@dataclass
class AtlasResult:
    state: AtlasState
    inverse: np.ndarray
    initial_energy: float
    initial_terms: dict
    trace: list
    composition_residuals: list
    mode: str = "joint"

    @property
    def final_energy(self):
        return self.trace[-1]["total"] if self.trace else self.initial_energy


def _threads(cfg):
    env = os.environ.get("ATLASFORGE_THREADS")
    n = int(env) if env else cfg.threads
    return max(1, n)


def _map(fn, items, cfg):
    items = list(items)
    n = _threads(cfg)
    if n == 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _stack_images(images):
    images = [as_scalar_grid(im, f"image {k}") for k, im in enumerate(images)]
    if len(images) < 2:
        raise DataError(f"at least 2 images are required, got {len(images)}")
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise DataError(f"images differ in size: {sorted(shapes)}")
    return np.stack(images)


def init_state(images, cfg: AtlasConfig):
    T = _stack_images(images) * cfg.intensity_scale
    M = len(T)
    shape = T.shape[1:]
    theta_T = np.stack(_map(lambda i: potts_2d(T[i], cfg.lambdaT, cfg.gammaT, cfg.potts), range(M), cfg))
    theta_R = potts_2d(T.mean(axis=0), cfg.lambdaR, cfg.gammaR, cfg.potts)
    I = identity_field(shape)
    return AtlasState(
        templates=T,
        theta_T=theta_T,
        theta_Tt=theta_T - theta_R,
        theta_R=theta_R,
        U=np.zeros((M, 2) + shape),
        V=np.repeat(I[None], M, axis=0),
        W=np.repeat(I[None], M, axis=0),
        Ubar=np.zeros((M, 2) + shape),
    )


def template_potts_problem(state, i, cfg):
    """Data and weights of the weighted Potts problem for theta_T (pulled back by phi^-1)."""
    Ubar = state.Ubar[i]
    det = warp(det2(jacobian(state.U[i])), Ubar)
    inv_det = 1.0 / np.maximum(det, cfg.det_floor)
    c = 0.5 * cfg.gamma1 * inv_det
    weights = cfg.lambdaT + c
    data = (cfg.lambdaT * state.templates[i]
            + c * (warp(state.theta_Tt[i], Ubar) + warp(state.theta_R, Ubar))) / weights
    return data, weights


def update_template_segmentation(state, i, cfg):
    data, weights = template_potts_problem(state, i, cfg)
    return potts_2d(data, weights, cfg.gammaT, cfg.potts)


def update_difference(state, i, cfg):
    diff = warp(state.theta_T[i], state.U[i]) - state.theta_R
    if cfg.gamma1 == 0:
        return diff
    return potts_2d(diff, np.full(diff.shape, 0.5 * cfg.gamma1), cfg.gammaTtilde, cfg.potts)


def atlas_potts_problem(state, cfg):
    M = state.M
    warped_T = np.mean([warp(state.templates[i], state.U[i]) for i in range(M)], axis=0)
    warped_theta = np.mean([warp(state.theta_T[i], state.U[i]) - state.theta_Tt[i]
                            for i in range(M)], axis=0)
    w = cfg.lambdaR + 0.5 * cfg.gamma1
    data = (cfg.lambdaR * warped_T + 0.5 * cfg.gamma1 * warped_theta) / w
    return data, np.full(data.shape, w)


def update_atlas_segmentation(state, cfg):
    data, weights = atlas_potts_problem(state, cfg)
    return potts_2d(data, weights, cfg.gammaR, cfg.potts)


def _record(state, cfg, k):
    total, terms = total_energy(state, cfg)
    dets = det2(np.moveaxis(state.V, 0, 2))
    rec = {"iter": k, "total": total, **terms,
           "min_det_V": float(dets.min()),
           "max_abs_V": float(np.abs(state.V).max()),
           "max_abs_W": float(np.abs(state.W).max()),
           "max_abs_U": float(np.abs(state.U).max())}
    state.trace.append(rec)
    return rec


def _register_step(state, cfg, tTt=None):
    """Steps 2.5 to 2.7 for every image."""
    p = cfg.ogden
    tTt = state.theta_Tt if tTt is None else tTt

    def one(i):
        V = v_update(state.V[i], state.W[i], jacobian(state.U[i]), p, cfg.gamma2, cfg.gamma3,
                     cfg.alpha, cfg.step_c)
        W = w_update(V, cfg.beta)
        U = state.U[i]
        for _ in range(cfg.flow_steps):
            force = el_residual(U, V, state.theta_T[i], state.theta_R, tTt[i],
                                state.templates[i], cfg)
            U = phi_step(U, force, cfg)
        return V, W, U

    for i, (V, W, U) in enumerate(_map(one, range(state.M), cfg)):
        state.V[i], state.W[i], state.U[i] = V, W, U


def _segmentation_block(state, cfg):
    M = state.M
    state.Ubar = np.stack(_map(lambda i: invert_deformation(state.U[i]), range(M), cfg))
    state.theta_T = np.stack(_map(lambda i: update_template_segmentation(state, i, cfg), range(M), cfg))
    state.theta_Tt = np.stack(_map(lambda i: update_difference(state, i, cfg), range(M), cfg))
    state.theta_R = update_atlas_segmentation(state, cfg)


def _finish(state, cfg, E0, terms0, mode):
    inverse = np.stack(_map(lambda i: invert_deformation(state.U[i]), range(state.M), cfg))
    res = [composition_residual(state.U[i], inverse[i]) for i in range(state.M)]
    return AtlasResult(state=state, inverse=inverse, initial_energy=E0, initial_terms=terms0,
                       trace=state.trace, composition_residuals=res, mode=mode)


def run_atlas(images, cfg: AtlasConfig = AtlasConfig(), state=None):
    """Run the alternating scheme for ``cfg.nbIter`` outer iterations.

    The segmentation block (inverse deformations, theta_T, theta_Tt, theta_R)
    runs at the first iteration and then every ``cfg.seg_cadence``
    iterations; the V, W and deformation updates run every iteration.
    """
    if state is None:
        state = init_state(images, cfg)
    E0, terms0 = total_energy(state, cfg)
    prev = E0
    try:
        for k in range(1, cfg.nbIter + 1):
            if k == 1 or k % cfg.seg_cadence == 0:
                _segmentation_block(state, cfg)
            _register_step(state, cfg)
            state.iteration = k
            rec = _record(state, cfg, k)
            log.debug("iter %d energy %.6g", k, rec["total"])
            if cfg.energy_tol > 0 and np.isfinite(prev) and abs(prev - rec["total"]) <= cfg.energy_tol * abs(prev):
                break
            prev = rec["total"]
    except AtlasError:
        raise
    except Exception as exc:
        raise AtlasError(f"atlas iteration {state.iteration + 1} failed: {exc}", state.trace) from exc
    return _finish(state, cfg, E0, terms0, "joint")


def sequential_baseline(images, cfg: AtlasConfig = AtlasConfig()):
    """Segment first, register with frozen segmentations, then build the atlas.

    The registration target is the Potts segmentation of the unregistered
    mean; the final atlas is the Potts segmentation of the mean warped image
    and the difference maps are refit once so the state can be scored with
    the joint functional.
    """
    state = init_state(images, cfg)
    E0, terms0 = total_energy(state, cfg)
    zero = np.zeros_like(state.theta_Tt)
    try:
        for k in range(1, cfg.nbIter + 1):
            _register_step(state, cfg, tTt=zero)
            state.iteration = k
        mean_warped = np.mean([warp(state.templates[i], state.U[i]) for i in range(state.M)], axis=0)
        state.theta_R = potts_2d(mean_warped, cfg.lambdaR, cfg.gammaR, cfg.potts)
        state.theta_Tt = np.stack([update_difference(state, i, cfg) for i in range(state.M)])
        _record(state, cfg, state.iteration)
    except Exception as exc:
        raise AtlasError(f"sequential baseline failed: {exc}", state.trace) from exc
    return _finish(state, cfg, E0, terms0, "sequential")


def coupling_residuals(state):
    """L2 norms of the three penalized constraints, summed over images."""
    v = w = t = 0.0
    for i in range(state.M):
        v += np.sum((state.V[i] - jacobian(state.U[i])) ** 2)
        w += np.sum((state.W[i] - inv2(state.V[i])) ** 2)
        t += np.sum((state.theta_Tt[i] - (warp(state.theta_T[i], state.U[i]) - state.theta_R)) ** 2)
    return {"V-grad(phi)": float(np.sqrt(v)), "W-inv(V)": float(np.sqrt(w)),
            "thetaTt-diff": float(np.sqrt(t))}
