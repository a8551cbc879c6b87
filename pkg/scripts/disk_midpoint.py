"""Two disks shifted by +-shift: does the atlas land on the midpoint disk?"""
import logging

import numpy as np

from _common import parser, setup, timed
from atlasforge.atlas import run_atlas
from atlasforge.config import AtlasConfig
from atlasforge.grid import lattice
from atlasforge.io import write_png
from atlasforge.synthetic import disk, shifted_disks


def main():
    ap = parser(__doc__, "disks")
    ap.add_argument("--shift", type=float, default=6.0)
    ap.add_argument("--blur", type=float, default=3.0)
    ap.add_argument("--dt", type=float, default=0.01)
    args = ap.parse_args()
    setup(args)

    shape, radius = (64, 64), 12.0
    imgs = shifted_disks(shape, radius, args.shift, blur=args.blur)
    with timed("joint run"):
        res = run_atlas(imgs, AtlasConfig.tshape(dt=args.dt, nbIter=args.iters))

    R = res.state.theta_R
    seg = R > 0.5 * (R.max() + R.min())
    c = ((shape[1] - 1) / 2, (shape[0] - 1) / 2)
    ref = disk(shape, c, radius) > 0
    X, Y = lattice(shape)
    dice = 2 * np.sum(seg & ref) / (seg.sum() + ref.sum())
    logging.info("Dice vs midpoint disk %.3f, centroid (%.2f, %.2f), expected (%.1f, %.1f)",
                 dice, X[seg].mean(), Y[seg].mean(), *c)
    for i, im in enumerate(imgs):
        write_png(args.out / f"input_{i}.png", im)
    write_png(args.out / "atlas.png", R)
    write_png(args.out / "atlas_mask.png", seg.astype(float))


if __name__ == "__main__":
    main()
