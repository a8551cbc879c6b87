"""Image ingestion and artifact writers."""
from __future__ import annotations

import csv
import os
import re
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError

IMAGE_SUFFIXES = (".pgm", ".pnm", ".png")


def _pgm_tokens(data):
    """Yield whitespace-separated header tokens and the offset after each, skipping comments."""
    pos = 0
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            start = pos
            while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
                pos += 1
            yield data[start:pos], pos


def read_pgm(path):
    """Read a binary (P5) or ASCII (P2) PGM; returns ``(values, maxval)``."""
    path = Path(path)
    data = path.read_bytes()
    toks = _pgm_tokens(data)
    try:
        magic, _ = next(toks)
        if magic not in (b"P2", b"P5"):
            raise DataError(f"{path}: not a grayscale PGM (magic {magic!r})")
        w, _ = next(toks)
        h, _ = next(toks)
        mx, end = next(toks)
        w, h, mx = int(w), int(h), int(mx)
    except (StopIteration, ValueError) as exc:
        raise DataError(f"{path}: truncated or malformed PGM header") from exc
    if w < 1 or h < 1 or not 0 < mx < 65536:
        raise DataError(f"{path}: bad PGM header values {w}x{h} maxval {mx}")
    if magic == b"P5":
        dtype = np.dtype(">u2") if mx > 255 else np.dtype("u1")
        body = data[end + 1:end + 1 + w * h * dtype.itemsize]
        if len(body) != w * h * dtype.itemsize:
            raise DataError(f"{path}: expected {w * h} samples, file is truncated")
        arr = np.frombuffer(body, dtype=dtype)
    else:
        vals = re.sub(rb"#[^\n]*", b"", data[end:]).split()
        if len(vals) < w * h:
            raise DataError(f"{path}: expected {w * h} samples, found {len(vals)}")
        arr = np.array([int(v) for v in vals[:w * h]])
    arr = arr.reshape(h, w).astype(float)
    if arr.max() > mx:
        raise DataError(f"{path}: sample exceeds maxval {mx}")
    return arr, mx


def write_pgm(path, img, binary=True):
    """Write an 8-bit PGM from values in [0, 1]."""
    q = np.clip(np.rint(np.asarray(img, dtype=float) * 255), 0, 255).astype(np.uint8)
    h, w = q.shape
    with open(path, "wb") as f:
        if binary:
            f.write(b"P5\n%d %d\n255\n" % (w, h))
            f.write(q.tobytes())
        else:
            f.write(b"P2\n%d %d\n255\n" % (w, h))
            for row in q:
                f.write((" ".join(str(v) for v in row) + "\n").encode())


def read_image(path):
    """Read one grayscale image with intensities mapped linearly to [0, 1]."""
    path = Path(path)
    suffix = path.suffix.lower()
    try:
        if suffix in (".pgm", ".pnm"):
            arr, mx = read_pgm(path)
            return arr / mx
        with Image.open(path) as im:
            if im.mode != "L":
                raise DataError(f"{path}: expected an 8-bit grayscale PNG, got mode {im.mode}")
            return np.asarray(im, dtype=float) / 255.0
    except (OSError, UnidentifiedImageError) as exc:
        raise DataError(f"{path}: unreadable image ({exc})") from exc


def list_images(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"input directory {directory} does not exist")
    return sorted((p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES),
                  key=lambda p: p.name)


def ingest(directory):
    """Load every PGM/PNG in ``directory`` in lexicographic order; returns ``(images, paths)``."""
    paths = list_images(directory)
    if len(paths) < 2:
        raise DataError(f"{directory}: need at least 2 images, found {len(paths)}")
    images = [read_image(p) for p in paths]
    first = images[0].shape
    for p, im in zip(paths, images):
        if im.shape != first:
            raise DataError(f"image size mismatch: {paths[0].name} is {first[1]}x{first[0]}, "
                            f"{p.name} is {im.shape[1]}x{im.shape[0]}")
    return images, paths


def to_uint8(arr):
    """Min-max rescale to 0..255 (a constant image maps to 0)."""
    a = np.asarray(arr, dtype=float)
    lo, hi = a.min(), a.max()
    if hi - lo <= 0:
        return np.zeros(a.shape, dtype=np.uint8)
    return np.rint((a - lo) / (hi - lo) * 255).astype(np.uint8)


def write_png(path, arr):
    Image.fromarray(to_uint8(arr), mode="L").save(path)


def header_path(path):
    return Path(str(path) + ".hdr")


def write_field(path, arr):
    """Raw little-endian float32 planes plus a ``width height components=N`` sidecar."""
    a = np.asarray(arr, dtype=float)
    if a.ndim == 2:
        a = a[None]
    ncomp, h, w = a.shape
    a.astype("<f4").tofile(path)
    header_path(path).write_text(f"{w} {h} components={ncomp}\n")


def read_field(path):
    path = Path(path)
    hdr = header_path(path)
    try:
        w, h, comp = hdr.read_text().split()
        ncomp = int(comp.split("=")[1])
        w, h = int(w), int(h)
    except (OSError, ValueError, IndexError) as exc:
        raise DataError(f"{hdr}: missing or malformed field header") from exc
    data = np.fromfile(path, dtype="<f4")
    if data.size != ncomp * h * w:
        raise DataError(f"{path}: expected {ncomp * h * w} floats, found {data.size}")
    return data.reshape(ncomp, h, w).astype(float)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def write_atomic(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
