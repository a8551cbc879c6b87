"""Small synthetic datasets for tests and experiment scripts."""
from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .grid import lattice, warp, zero_boundary


def disk(shape, center, radius, value=1.0):
    X, Y = lattice(shape)
    return np.where((X - center[0]) ** 2 + (Y - center[1]) ** 2 <= radius ** 2, value, 0.0)


def shifted_disks(shape=(64, 64), radius=12.0, shift=6.0, axis=0, blur=0.0):
    """Two disks translated by ``-shift`` and ``+shift`` from the image centre.

    ``blur`` is the sigma (pixels) of an optional Gaussian edge softening.
    """
    h, w = shape
    c = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
    e = np.zeros(2)
    e[axis] = shift
    out = [disk(shape, c - e, radius), disk(shape, c + e, radius)]
    if blur > 0:
        out = [gaussian_filter(im, blur) for im in out]
    return out


def disk_clusters(n_per_side=5, shape=(64, 64), radius=10.0, shift=6.0, jitter=0.5, seed=0, blur=0.0):
    """Left- and right-shifted disks with a small random jitter of the centre."""
    rng = np.random.default_rng(seed)
    h, w = shape
    c = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
    out = []
    for sign in (-1.0, 1.0):
        for _ in range(n_per_side):
            d = np.array([sign * shift, 0.0]) + rng.uniform(-jitter, jitter, size=2)
            im = disk(shape, c + d, radius)
            out.append(gaussian_filter(im, blur) if blur > 0 else im)
    return out


def t_glyph(shape=(64, 64), bar_width=10, stem_width=10, top=14, bottom=50, left=14, right=50):
    h, w = shape
    img = np.zeros(shape)
    img[top:top + bar_width, left:right] = 1.0
    cx = w // 2
    img[top:bottom, cx - stem_width // 2:cx + (stem_width + 1) // 2] = 1.0
    return img


def smooth_random_displacement(shape, amplitude, seed, n_modes=3):
    """Smooth displacement built from low-frequency sines, zero on the boundary."""
    rng = np.random.default_rng(seed)
    h, w = shape
    X, Y = lattice(shape)
    sx, sy = X / (w - 1), Y / (h - 1)
    U = np.zeros((2,) + tuple(shape))
    for c in range(2):
        for _ in range(n_modes):
            kx, ky = rng.integers(1, 3, size=2)
            U[c] += rng.normal() * np.sin(np.pi * kx * sx) * np.sin(np.pi * ky * sy)
    U *= amplitude / max(np.abs(U).max(), 1e-12)
    return zero_boundary(U)


def t_glyph_variants(n=10, shape=(64, 64), amplitude=3.0, seed=0):
    """``n`` smoothly warped copies of a T glyph (nearest-valued, binary)."""
    base = t_glyph(shape)
    out = []
    for k in range(n):
        U = smooth_random_displacement(shape, amplitude, seed + k)
        out.append((warp(base, U) >= 0.5).astype(float))
    return out
