"""Coupling residuals as the penalty weights gamma1..3 grow together."""
import logging

from _common import parser, setup, timed
from atlasforge.atlas import coupling_residuals, run_atlas
from atlasforge.config import AtlasConfig
from atlasforge.io import write_csv
from atlasforge.synthetic import shifted_disks


def main():
    ap = parser(__doc__, "penalty_trend")
    ap.add_argument("--factors", type=float, nargs="+", default=[1, 4, 16])
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--cadence", type=int, default=1, help="segmentation refit cadence")
    args = ap.parse_args()
    setup(args)

    imgs = shifted_disks(blur=3.0)
    base = AtlasConfig.tshape(dt=0.01, beta=args.beta, seg_cadence=args.cadence, nbIter=args.iters)
    rows = []
    for f in args.factors:
        cfg = base.replace(gamma1=f * base.gamma1, gamma2=f * base.gamma2, gamma3=f * base.gamma3)
        with timed(f"factor {f:g}"):
            r = coupling_residuals(run_atlas(imgs, cfg).state)
        rows.append([f, *r.values()])
        logging.info("x%-4g %s", f, "  ".join(f"{k} {v:.4g}" for k, v in r.items()))
    write_csv(args.out / "residuals.csv", ["factor", *r.keys()], rows)


if __name__ == "__main__":
    main()
