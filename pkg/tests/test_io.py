import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from atlasforge.errors import DataError
from atlasforge.io import (ingest, read_field, read_image, read_pgm, to_uint8, write_atomic,
                           write_field, write_pgm)

img8 = arrays(np.uint8, st.tuples(st.integers(2, 6), st.integers(2, 6)))


@given(q=img8, binary=st.booleans())
def test_pgm_roundtrip(tmp_path_factory, q, binary):
    p = tmp_path_factory.mktemp("pgm") / "a.pgm"
    write_pgm(p, q / 255.0, binary=binary)
    arr, mx = read_pgm(p)
    assert mx == 255
    assert np.array_equal(arr, q.astype(float))


def test_pgm_with_comments_and_16bit(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P2\n# made by hand\n3 1\n# max\n1000\n0 500 1000\n")
    assert np.allclose(read_image(p), [[0.0, 0.5, 1.0]])
    q = tmp_path / "d.pgm"
    q.write_bytes(b"P5 2 1 65535\n" + np.array([0, 65535], dtype=">u2").tobytes())
    assert read_image(q).tolist() == [[0.0, 1.0]]


def test_255_maps_to_one(tmp_path):
    Image.fromarray(np.array([[0, 255]], dtype=np.uint8), mode="L").save(tmp_path / "x.png")
    v = read_image(tmp_path / "x.png")
    assert v[0, 1] == 1.0 and v[0, 0] == 0.0


def test_png_must_be_grayscale(tmp_path):
    Image.new("RGB", (3, 3)).save(tmp_path / "c.png")
    with pytest.raises(DataError, match="c.png"):
        read_image(tmp_path / "c.png")


def test_malformed_files(tmp_path):
    (tmp_path / "bad.pgm").write_bytes(b"P6\n2 2\n255\n....")
    with pytest.raises(DataError, match="bad.pgm"):
        read_image(tmp_path / "bad.pgm")
    (tmp_path / "short.pgm").write_bytes(b"P5\n4 4\n255\nab")
    with pytest.raises(DataError, match="truncated"):
        read_image(tmp_path / "short.pgm")
    (tmp_path / "junk.png").write_bytes(b"not a png")
    with pytest.raises(DataError, match="junk.png"):
        read_image(tmp_path / "junk.png")


def test_ingest_order_and_values(tmp_path):
    for name, v in [("b.pgm", 0.5), ("a.pgm", 1.0), ("c.png", 0.0)]:
        if name.endswith(".pgm"):
            write_pgm(tmp_path / name, np.full((4, 5), v))
        else:
            Image.fromarray(np.zeros((4, 5), np.uint8), mode="L").save(tmp_path / name)
    (tmp_path / "notes.txt").write_text("ignored")
    images, paths = ingest(tmp_path)
    assert [p.name for p in paths] == ["a.pgm", "b.pgm", "c.png"]
    assert images[0].max() == 1.0 and all(im.shape == (4, 5) for im in images)
    assert all(0.0 <= im.min() and im.max() <= 1.0 for im in images)


def test_ingest_size_mismatch_names_both(tmp_path):
    write_pgm(tmp_path / "one.pgm", np.zeros((4, 4)))
    write_pgm(tmp_path / "two.pgm", np.zeros((5, 4)))
    with pytest.raises(DataError) as ei:
        ingest(tmp_path)
    assert "one.pgm" in str(ei.value) and "two.pgm" in str(ei.value)


def test_ingest_needs_two(tmp_path):
    write_pgm(tmp_path / "one.pgm", np.zeros((4, 4)))
    with pytest.raises(DataError, match="at least 2"):
        ingest(tmp_path)
    with pytest.raises(DataError, match="does not exist"):
        ingest(tmp_path / "missing")


def test_field_roundtrip(tmp_path):
    U = np.random.default_rng(0).normal(size=(2, 3, 4)).astype(np.float32).astype(float)
    write_field(tmp_path / "f.f32", U)
    assert (tmp_path / "f.f32.hdr").read_text().strip() == "4 3 components=2"
    raw = np.fromfile(tmp_path / "f.f32", dtype="<f4")
    assert np.array_equal(raw[:12], U[0].ravel())       # U1 plane first, row-major
    assert np.array_equal(read_field(tmp_path / "f.f32"), U)


def test_to_uint8():
    assert to_uint8(np.array([[2.0, 4.0]])).tolist() == [[0, 255]]
    assert to_uint8(np.full((2, 2), 7.0)).max() == 0


def test_atomic_write(tmp_path):
    write_atomic(tmp_path / "m.txt", "hello\n")
    assert (tmp_path / "m.txt").read_text() == "hello\n"
    assert [p.name for p in tmp_path.iterdir()] == ["m.txt"]
