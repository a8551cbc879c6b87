"""Batch front end: ``atlasforge <command> --config FILE --input DIR --out DIR``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .atlas import AtlasError, run_atlas, sequential_baseline
from .config import PRESETS, AtlasConfig
from .dmspline import SplineConfig, solve_spline
from .errors import AtlasforgeError, ConfigError, DataError, NumericalError
from .grid import warp
from .io import ingest, read_field, write_atomic, write_csv, write_field, write_png
from .ogden import ENERGY_TERMS
from .potts import potts_2d
from .shapestats import pca, synthesize_mode

log = logging.getLogger("atlasforge")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
ENERGY_HEADER = ("iter", "total") + ENERGY_TERMS
MODE_CS = tuple(range(-5, 6))

_SPLINE_KEYS = {"spline_epsilon": "epsilon", "spline_gamma_fit": "gamma_fit",
                "cells_x": "cells_x", "cells_y": "cells_y", "quad_order": "quad_order"}


@dataclass(frozen=True)
class RunConfig:
    atlas: AtlasConfig = field(default_factory=AtlasConfig)
    spline: SplineConfig = field(default_factory=SplineConfig)
    num_modes: int = 3
    mode_scale: float = 50.0
    out: str | None = None
    preset: str = "tshape"

    def snapshot(self):
        items = {"preset": self.preset}
        for f in dataclasses.fields(AtlasConfig):
            if f.name != "potts":
                items[f.name] = getattr(self.atlas, f.name)
        for key, attr in _SPLINE_KEYS.items():
            items[key] = getattr(self.spline, attr)
        items["num_modes"] = self.num_modes
        items["mode_scale"] = self.mode_scale
        return items


def _atlas_types():
    return {f.name: f.type for f in dataclasses.fields(AtlasConfig) if f.name != "potts"}


def _convert(key, raw, kind):
    try:
        if kind in (int, "int"):
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        if kind in (str, "str"):
            return raw
        return float(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {getattr(kind, '__name__', kind)}")


def parse_config_text(text, source="<config>"):
    """Parse flat ``key = value`` lines (``#`` starts a comment) into a :class:`RunConfig`."""
    pairs = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {line!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        if k in pairs:
            raise ConfigError(f"{source}:{n}: duplicate key {k!r}")
        pairs[k] = v
    preset = pairs.pop("preset", "tshape")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    atypes = _atlas_types()
    akw, skw, rkw = {}, {}, {}
    for k, v in pairs.items():
        if k in atypes:
            akw[k] = _convert(k, v, atypes[k])
        elif k in _SPLINE_KEYS:
            skw[_SPLINE_KEYS[k]] = _convert(k, v, int if k in ("cells_x", "cells_y", "quad_order") else float)
        elif k == "num_modes":
            rkw[k] = _convert(k, v, int)
        elif k == "mode_scale":
            rkw[k] = _convert(k, v, float)
        elif k == "out":
            rkw[k] = v
        else:
            raise ConfigError(f"{source}: unknown config key {k!r}")
    try:
        cfg = RunConfig(atlas=PRESETS[preset](**akw), spline=SplineConfig(**skw), preset=preset, **rkw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    if cfg.num_modes < 1:
        raise ConfigError("num_modes must be >= 1")
    return cfg


def load_config(path):
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc}") from exc
    return parse_config_text(text, str(p))


class Run:
    """Collects timings, outputs and the failing stage for the manifest."""

    def __init__(self, command, out, cfg, inputs=(), mode=None):
        self.command = command
        self.out = Path(out)
        self.cfg = cfg
        self.inputs = [str(p) for p in inputs]
        self.mode = mode
        self.timings = {}
        self.outputs = []
        self.failed_stage = None
        self.error = None

    def stage(self, name):
        run = self

        class _Stage:
            def __enter__(self):
                self.t0 = time.perf_counter()
                log.info("stage %s", name)

            def __exit__(self, et, ev, tb):
                run.timings[name] = time.perf_counter() - self.t0
                if et is not None and run.failed_stage is None:
                    run.failed_stage = name
                return False

        return _Stage()

    def path(self, name):
        p = self.out / name
        self.outputs.append(name)
        return p

    def manifest_text(self):
        lines = [f"command: {self.command}"]
        if self.mode:
            lines.append(f"mode={self.mode}")
        lines.append(f"status: {'failed' if self.failed_stage else 'ok'}")
        if self.failed_stage:
            lines.append(f"failed_stage: {self.failed_stage}")
            lines.append(f"error: {self.error}")
        lines.append("inputs:")
        lines += [f"  {p}" for p in self.inputs]
        lines.append("config:")
        lines += [f"  {k} = {v}" for k, v in self.cfg.snapshot().items()]
        lines.append("timings_seconds:")
        lines += [f"  {k} = {v:.3f}" for k, v in self.timings.items()]
        lines.append("outputs:")
        lines += [f"  {p}" for p in self.outputs if (self.out / p).exists()]
        return "\n".join(lines) + "\n"

    def write_manifest(self):
        self.outputs.append("manifest.txt")
        write_atomic(self.out / "manifest.txt", self.manifest_text())


def write_energy(run, trace):
    rows = [[rec["iter"], rec["total"]] + [rec[k] for k in ENERGY_TERMS] for rec in trace]
    write_csv(run.path("energy.csv"), ENERGY_HEADER, rows)


def write_atlas_outputs(run, result):
    st = result.state
    scale = run.cfg.atlas.intensity_scale
    write_png(run.path("atlas.png"), st.theta_R)
    write_field(run.path("atlas.f32"), st.theta_R / scale)
    diff = np.zeros(st.shape)
    for i in range(st.M):
        k = i + 1
        write_png(run.path(f"seg_{k}.png"), st.theta_T[i])
        write_png(run.path(f"warped_{k}.png"), warp(st.templates[i], st.U[i]))
        write_field(run.path(f"field_{k}.f32"), st.U[i])
        write_field(run.path(f"inverse_{k}.f32"), result.inverse[i])
        diff += np.abs(warp(st.theta_T[i], st.U[i]) - st.theta_R)
    write_png(run.path("diffmap.png"), diff)
    write_energy(run, result.trace)


def _numbered(directory, prefix):
    d = Path(directory)
    files = sorted(d.glob(f"{prefix}_*.f32"), key=lambda p: int(p.stem.split("_")[-1]))
    if not files:
        raise DataError(f"{d}: no {prefix}_<i>.f32 fields found")
    return files


def stage_spline(run, inverses):
    smooth = []
    for k, U in enumerate(inverses, 1):
        _, S = solve_spline(U, run.cfg.spline)
        write_field(run.path(f"spline_{k}.f32"), S)
        smooth.append(S)
    return smooth


def stage_pca(run, fields):
    res = pca(fields)
    ratio = res.explained_variance_ratio
    write_csv(run.path("eigenvalues.csv"), ("index", "eigenvalue", "explained_ratio"),
              [[j + 1, float(w), float(r)] for j, (w, r) in enumerate(zip(res.eigenvalues, ratio))])
    for j, m in enumerate(res.modes[:run.cfg.num_modes], 1):
        write_field(run.path(f"pca_mode_{j}.f32"), m)
    return res


def stage_modes(run, theta_R, modes):
    for j, m in enumerate(modes[:run.cfg.num_modes], 1):
        for c in MODE_CS:
            write_png(run.path(f"mode_{j}_c{c}.png"), synthesize_mode(theta_R, m, c, run.cfg.mode_scale))


def cmd_segment(run, args):
    with run.stage("ingest"):
        images, paths = ingest(args.input)
        run.inputs = [str(p) for p in paths]
    a = run.cfg.atlas
    with run.stage("segment"):
        for k, im in enumerate(images, 1):
            seg = potts_2d(im * a.intensity_scale, a.lambdaT, a.gammaT, a.potts) / a.intensity_scale
            write_png(run.path(f"seg_{k}.png"), seg)
            write_field(run.path(f"seg_{k}.f32"), seg)


def _atlas(run, args, sequential=False):
    with run.stage("ingest"):
        images, paths = ingest(args.input)
        run.inputs = [str(p) for p in paths]
    with run.stage("baseline" if sequential else "atlas"):
        try:
            result = (sequential_baseline if sequential else run_atlas)(images, run.cfg.atlas)
        except AtlasError as exc:
            if exc.trace:
                write_energy(run, exc.trace)
            raise
    with run.stage("export"):
        write_atlas_outputs(run, result)
    return result


def cmd_atlas(run, args):
    _atlas(run, args)


def cmd_baseline(run, args):
    _atlas(run, args, sequential=True)


def cmd_spline(run, args):
    with run.stage("load"):
        files = _numbered(args.input, "inverse")
        run.inputs = [str(p) for p in files]
        fields = [read_field(p) for p in files]
    with run.stage("spline"):
        stage_spline(run, fields)


def cmd_pca(run, args):
    with run.stage("load"):
        files = _numbered(args.input, "spline")
        run.inputs = [str(p) for p in files]
        fields = [read_field(p) for p in files]
    with run.stage("pca"):
        stage_pca(run, fields)


def cmd_modes(run, args):
    with run.stage("load"):
        d = Path(args.input)
        theta = read_field(d / "atlas.f32")[0]
        files = _numbered(d, "pca_mode")
        run.inputs = [str(d / "atlas.f32")] + [str(p) for p in files]
        modes = [read_field(p) for p in files]
    with run.stage("modes"):
        stage_modes(run, theta, modes)


def cmd_pipeline(run, args):
    result = _atlas(run, args)
    with run.stage("spline"):
        smooth = stage_spline(run, result.inverse)
    with run.stage("pca"):
        res = stage_pca(run, smooth)
    with run.stage("modes"):
        stage_modes(run, result.state.theta_R / run.cfg.atlas.intensity_scale, res.modes)


COMMANDS = {"segment": cmd_segment, "atlas": cmd_atlas, "spline": cmd_spline, "pca": cmd_pca,
            "modes": cmd_modes, "pipeline": cmd_pipeline, "baseline": cmd_baseline}


def build_parser():
    ap = argparse.ArgumentParser(prog="atlasforge", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--input", required=True, help="input directory")
        p.add_argument("--out", help="output directory (overrides the config 'out' key)")
    return ap


def exit_code(exc):
    """Map an exception (or the cause chain of an AtlasError) to a CLI exit code."""
    seen = exc
    while seen is not None:
        if isinstance(seen, ConfigError):
            return EXIT_CONFIG
        if isinstance(seen, DataError):
            return EXIT_DATA
        if isinstance(seen, (NumericalError, FloatingPointError, np.linalg.LinAlgError)):
            return EXIT_NUMERIC
        seen = seen.__cause__
    if isinstance(exc, AtlasforgeError):
        return EXIT_NUMERIC
    return 1


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"atlasforge: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.out
    if not out:
        print("atlasforge: config error: no output directory (--out or 'out' key)", file=sys.stderr)
        return EXIT_CONFIG
    Path(out).mkdir(parents=True, exist_ok=True)
    mode = {"baseline": "sequential", "atlas": "joint", "pipeline": "joint"}.get(args.command)
    run = Run(args.command, out, cfg, mode=mode)
    code = EXIT_OK
    try:
        COMMANDS[args.command](run, args)
    except Exception as exc:  # noqa: BLE001 - mapped to an exit code below
        code = exit_code(exc)
        run.error = str(exc).replace("\n", " ")
        run.failed_stage = run.failed_stage or "setup"
        print(f"atlasforge: {args.command} failed in stage {run.failed_stage}: {exc}", file=sys.stderr)
        if code == 1:
            log.exception("unexpected error")
    run.write_manifest()
    return code


if __name__ == "__main__":
    sys.exit(main())
