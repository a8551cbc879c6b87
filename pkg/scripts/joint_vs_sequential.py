"""Score the joint and segment-then-register pipelines in the same functional."""
import logging

from _common import parser, setup, timed
from atlasforge.atlas import run_atlas, sequential_baseline
from atlasforge.config import AtlasConfig
from atlasforge.io import write_csv
from atlasforge.ogden import ENERGY_TERMS
from atlasforge.synthetic import shifted_disks, t_glyph_variants


def main():
    ap = parser(__doc__, "joint_vs_sequential")
    ap.add_argument("--scale", type=float, default=255.0, help="intensity_scale")
    args = ap.parse_args()
    setup(args)

    datasets = {
        "disks": (shifted_disks(blur=3.0), AtlasConfig.tshape(dt=0.01)),
        "tglyph": (t_glyph_variants(10), AtlasConfig.tshape()),
    }
    rows = []
    for name, (imgs, cfg) in datasets.items():
        cfg = cfg.replace(nbIter=args.iters, intensity_scale=args.scale)
        for label, fn in (("joint", run_atlas), ("sequential", sequential_baseline)):
            with timed(f"{name} {label}"):
                res = fn(imgs, cfg)
            last = res.trace[-1]
            rows.append([name, label, res.final_energy] + [last[t] for t in ENERGY_TERMS])
            logging.info("%-7s %-10s %.6g", name, label, res.final_energy)
    write_csv(args.out / "energies.csv", ("dataset", "pipeline", "total") + ENERGY_TERMS, rows)


if __name__ == "__main__":
    main()
