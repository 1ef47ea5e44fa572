"""Image, metadata and weight-tensor files.

* PGM (``P5``): integer images, 8 or 16 bits, big-endian samples.
* PFM (``Pf``): float32 grayscale, little-endian (scale ``-1``), rows
  stored bottom to top as the format prescribes.
* Metadata: flat ``key=value`` text, one pair per line.
* Weights: ``.npy`` arrays.
"""
import os

import numpy as np


def _read_token(fh):
    token = b""
    while True:
        ch = fh.read(1)
        if not ch:
            break
        if ch == b"#" and not token:
            fh.readline()
            continue
        if ch.isspace():
            if token:
                break
            continue
        token += ch
    return token


def read_pgm(path):
    with open(path, "rb") as fh:
        if _read_token(fh) != b"P5":
            raise ValueError(f"{path}: not a binary PGM (P5) file")
        try:
            width, height, maxval = (int(_read_token(fh)) for _ in range(3))
        except ValueError:
            raise ValueError(f"{path}: malformed PGM header") from None
        if not (width > 0 and height > 0 and 0 < maxval < 65536):
            raise ValueError(f"{path}: invalid PGM header values")
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = fh.read(width * height * dtype.itemsize)
    if len(raw) != width * height * dtype.itemsize:
        raise ValueError(f"{path}: truncated PGM data")
    return np.frombuffer(raw, dtype=dtype).reshape(height, width).astype(np.float64)


def write_pgm(path, image, maxval=65535):
    """Write a 16-bit PGM; values are rounded and clipped to ``[0, maxval]``."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("PGM images must be 2-D")
    if not 0 < maxval < 65536:
        raise ValueError("maxval must lie in [1, 65535]")
    data = np.clip(np.rint(img), 0, maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n%d\n" % (img.shape[1], img.shape[0], maxval))
        fh.write(data.astype(dtype).tobytes())


def read_pfm(path):
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"Pf":
            raise ValueError(f"{path}: not a grayscale PFM (Pf) file")
        try:
            width, height = (int(t) for t in fh.readline().split())
            scale = float(fh.readline().strip())
        except ValueError:
            raise ValueError(f"{path}: malformed PFM header") from None
        if width <= 0 or height <= 0 or scale == 0:
            raise ValueError(f"{path}: invalid PFM header values")
        dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
        raw = fh.read(width * height * 4)
    if len(raw) != width * height * 4:
        raise ValueError(f"{path}: truncated PFM data")
    img = np.frombuffer(raw, dtype=dtype).reshape(height, width)
    return img[::-1].astype(np.float64)


def write_pfm(path, image):
    """Write a float32 PFM. Values outside float32 range raise."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("PFM images must be 2-D")
    finite = np.isfinite(img)
    if np.any(np.abs(img[finite]) > np.finfo(np.float32).max):
        raise ValueError("image values overflow float32")
    with open(path, "wb") as fh:
        fh.write(b"Pf\n%d %d\n-1.0\n" % (img.shape[1], img.shape[0]))
        fh.write(np.ascontiguousarray(img[::-1], dtype="<f4").tobytes())


def read_image(path):
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pfm":
        return read_pfm(path)
    if ext in (".pgm", ".pnm"):
        return read_pgm(path)
    if ext == ".npy":
        img = np.load(path, allow_pickle=False)
        if img.ndim != 2:
            raise ValueError(f"{path}: expected a 2-D array")
        return img.astype(np.float64)
    raise ValueError(f"{path}: unsupported image format {ext!r} (use .pfm, .pgm or .npy)")


def write_image(path, image):
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pfm":
        write_pfm(path, image)
    elif ext in (".pgm", ".pnm"):
        write_pgm(path, image)
    elif ext == ".npy":
        np.save(path, np.asarray(image, dtype=np.float64), allow_pickle=False)
    else:
        raise ValueError(f"{path}: unsupported image format {ext!r} (use .pfm, .pgm or .npy)")


def meta_path(image_path):
    return image_path + ".meta"


def write_meta(path, meta):
    lines = []
    for key, value in meta.items():
        key, text = str(key), str(value)
        if not key or "=" in key or "\n" in key or "\n" in text:
            raise ValueError(f"cannot store metadata entry {key!r}")
        lines.append(f"{key}={text}\n")
    with open(path, "w") as fh:
        fh.writelines(lines)


def read_meta(path):
    meta = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{n}: expected key=value")
            key, value = line.split("=", 1)
            meta[key.strip()] = value.strip()
    return meta


def save_weights(path, weights):
    np.save(path, np.asarray(weights, dtype=np.float64), allow_pickle=False)


def load_weights(path):
    return np.load(path, allow_pickle=False)
