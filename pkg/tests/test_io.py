import numpy as np
import pytest

from pgvba import io


def test_pfm_roundtrip_is_bit_exact(tmp_path, rng):
    img = rng.normal(0, 100, (7, 5)).astype(np.float32).astype(np.float64)
    img[0, 0] = -0.0
    p = str(tmp_path / "a.pfm")
    io.write_pfm(p, img)
    back = io.read_pfm(p)
    assert back.shape == (7, 5)
    np.testing.assert_array_equal(back, img)
    assert np.signbit(back[0, 0])


def test_pfm_layout(tmp_path):
    # rows are stored bottom to top
    img = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    p = str(tmp_path / "b.pfm")
    io.write_pfm(p, img)
    raw = open(p, "rb").read()
    assert raw.startswith(b"Pf\n2 3\n-1.0\n")
    np.testing.assert_array_equal(np.frombuffer(raw[-24:], "<f4"), [5, 6, 3, 4, 1, 2])


def test_pfm_big_endian(tmp_path):
    p = tmp_path / "c.pfm"
    p.write_bytes(b"Pf\n2 1\n1.0\n" + np.array([1.5, -2.0], ">f4").tobytes())
    np.testing.assert_array_equal(io.read_pfm(str(p)), [[1.5, -2.0]])


@pytest.mark.parametrize("maxval", [255, 65535])
def test_pgm_roundtrip(tmp_path, rng, maxval):
    img = rng.integers(0, maxval + 1, (6, 9)).astype(np.float64)
    p = str(tmp_path / "a.pgm")
    io.write_pgm(p, img, maxval=maxval)
    np.testing.assert_array_equal(io.read_pgm(p), img)


def test_pgm_clips_and_rounds(tmp_path):
    p = str(tmp_path / "a.pgm")
    io.write_pgm(p, np.array([[-3.0, 2.6, 1e6]]))
    np.testing.assert_array_equal(io.read_pgm(p), [[0, 3, 65535]])


def test_pgm_header_comment(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n255\n" + bytes([7, 9]))
    np.testing.assert_array_equal(io.read_pgm(str(p)), [[7, 9]])


@pytest.mark.parametrize("content", [b"P2\n1 1\n255\n1", b"P5\n2 2\n255\n\x01", b"P5\nx y\n255\n"])
def test_pgm_rejects(tmp_path, content):
    p = tmp_path / "bad.pgm"
    p.write_bytes(content)
    with pytest.raises(ValueError):
        io.read_pgm(str(p))


def test_dispatch(tmp_path, rng):
    img = rng.uniform(0, 1, (4, 4))
    for name in ("x.npy", "x.pfm"):
        p = str(tmp_path / name)
        io.write_image(p, img)
        np.testing.assert_allclose(io.read_image(p), img, rtol=1e-7)
    with pytest.raises(ValueError):
        io.write_image(str(tmp_path / "x.png"), img)
    with pytest.raises(ValueError):
        io.read_image(str(tmp_path / "x.tif"))


def test_meta_roundtrip(tmp_path):
    p = str(tmp_path / "m.meta")
    io.write_meta(p, {"kernel": "gaussian:25:1.6", "sigma2": 9.0, "seed": 3})
    assert io.read_meta(p) == {"kernel": "gaussian:25:1.6", "sigma2": "9.0", "seed": "3"}
    with pytest.raises(ValueError):
        io.write_meta(p, {"a=b": 1})
    (tmp_path / "bad.meta").write_text("novalue\n")
    with pytest.raises(ValueError):
        io.read_meta(str(tmp_path / "bad.meta"))


def test_weights_roundtrip(tmp_path, rng):
    w = rng.uniform(0, 1, (49, 5, 6))
    p = str(tmp_path / "w.npy")
    io.save_weights(p, w)
    np.testing.assert_array_equal(io.load_weights(p), w)
