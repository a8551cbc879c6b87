"""Helpers shared by the experiment scripts."""
import argparse
import logging
import time
import warnings
from contextlib import contextmanager
from pathlib import Path

from atlasforge.potts import PottsConvergenceWarning


def parser(doc, out_default):
    ap = argparse.ArgumentParser(description=doc)
    ap.add_argument("--out", type=Path, default=Path("runs") / out_default)
    ap.add_argument("--iters", type=int, default=100, help="outer iterations")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def setup(args):
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    warnings.simplefilter("ignore", PottsConvergenceWarning)
    args.out.mkdir(parents=True, exist_ok=True)


@contextmanager
def timed(label):
    t0 = time.perf_counter()
    yield
    logging.info("%s: %.1f s", label, time.perf_counter() - t0)
