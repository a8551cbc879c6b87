"""Deformation PCA on two clusters of shifted disks; writes mode sweeps and the spectrum."""
import logging

from _common import parser, setup, timed
from atlasforge.atlas import run_atlas
from atlasforge.config import AtlasConfig
from atlasforge.dmspline import SplineConfig, solve_spline
from atlasforge.io import write_csv, write_png
from atlasforge.shapestats import mode_sweep, pca
from atlasforge.synthetic import disk_clusters


def main():
    ap = parser(__doc__, "pca_modes")
    ap.add_argument("--per-side", type=int, default=5)
    ap.add_argument("--epsilon", type=float, default=1e-2, help="spline smoothing weight")
    ap.add_argument("--mode-scale", type=float, default=50.0)
    args = ap.parse_args()
    setup(args)

    imgs = disk_clusters(args.per_side, blur=3.0)
    with timed("atlas"):
        res = run_atlas(imgs, AtlasConfig.tshape(dt=0.01, nbIter=args.iters))
    with timed("splines"):
        smooth = [solve_spline(U, SplineConfig(epsilon=args.epsilon))[1] for U in res.inverse]
    p = pca(smooth)
    ratio = p.explained_variance_ratio
    write_csv(args.out / "eigenvalues.csv", ("index", "eigenvalue", "explained_ratio"),
              [[j, float(w), float(r)] for j, (w, r) in enumerate(zip(p.eigenvalues, ratio))])
    logging.info("explained variance: %s", ", ".join(f"{r:.4f}" for r in ratio[:3]))
    for j, mode in enumerate(p.modes[:2]):
        for c, img in mode_sweep(res.state.theta_R, mode, args.mode_scale):
            write_png(args.out / f"mode_{j}_c{c:+d}.png", img)


if __name__ == "__main__":
    main()
