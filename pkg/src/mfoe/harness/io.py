"""
Image and array files.

Images are grayscale PGM (P5, 8 or 16 bit) or PNG, normalized to [0, 1] on
read.  Arrays use a flat little-endian container::

    b"MFOE" | u32 version | u32 dtype code (1 = f64) | u32 rank | u64 dims[rank] | data
"""

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import ParseError

ARRAY_MAGIC = b"MFOE"
ARRAY_VERSION = 1
DTYPE_F64 = 1
IMAGE_SUFFIXES = (".pgm", ".png")


def _pgm_tokens(data):
    """Header fields of a P5 file and the offset of the raster."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm(path):
    data = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(data)
    if tokens[0] != b"P5":
        raise ParseError(f"{path}: only binary PGM (P5) is supported")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ParseError(f"{path}: malformed PGM header") from None
    if not 0 < maxval < 65536:
        raise ParseError(f"{path}: invalid maxval {maxval}")
    dtype = ">u2" if maxval > 255 else "u1"
    count = width * height
    if len(data) - offset < count * np.dtype(dtype).itemsize:
        raise ParseError(f"{path}: truncated PGM raster")
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    return raster.reshape(height, width).astype(np.float64) / maxval


def write_pgm(path, img, bits=16):
    """Write an image clipped to [0, 1] as a P5 PGM with 8 or 16 bits per pixel."""
    maxval = (1 << bits) - 1
    q = np.round(np.clip(np.asarray(img, dtype=np.float64), 0, 1) * maxval)
    raster = q.astype(">u2" if bits == 16 else "u1")
    h, w = raster.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode() + raster.tobytes())


def read_image(path):
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I"):
            a = np.asarray(im, dtype=np.float64)
            return a / (65535.0 if a.max() > 255 else 255.0)
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


def list_images(directory):
    paths = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise ParseError(f"{directory}: no .pgm or .png images found")
    return paths


def write_array(path, a):
    a = np.array(a, dtype="<f8", order="C")
    head = ARRAY_MAGIC + struct.pack("<III", ARRAY_VERSION, DTYPE_F64, a.ndim)
    head += struct.pack(f"<{a.ndim}Q", *a.shape)
    Path(path).write_bytes(head + a.tobytes())


def read_array(path):
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != ARRAY_MAGIC:
        raise ParseError(f"{path}: not an MFOE array file")
    version, dtype, rank = struct.unpack_from("<III", data, 4)
    if version != ARRAY_VERSION or dtype != DTYPE_F64:
        raise ParseError(f"{path}: unsupported version {version} or dtype {dtype}")
    if len(data) < 16 + 8 * rank:
        raise ParseError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{rank}Q", data, 16)
    offset = 16 + 8 * rank
    count = int(np.prod(dims, dtype=np.int64))
    if len(data) - offset != 8 * count:
        raise ParseError(f"{path}: expected {8 * count} data bytes, found {len(data) - offset}")
    return np.frombuffer(data, dtype="<f8", offset=offset).reshape(dims).astype(np.float64)
