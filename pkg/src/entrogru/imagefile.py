"""Binary PPM (P6) and PGM (P5) reading and writing.

Entropy maps are written as PGM after linear scaling from [0, log2(n)] bits
to [0, 255]; the scaling is recorded in the file's comment header so the
map can be recovered.
"""

from __future__ import annotations

import numpy as np

from .entropy import max_entropy_bits


def _read_token(data: bytes, pos: int):
    while pos < len(data):
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < len(data) and not data[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ValueError("truncated PNM header")
    return data[start:pos], pos


def read_pnm(path) -> np.ndarray:
    """Read a binary PGM/PPM; returns (h, w) or (h, w, 3) uint8."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, pos = _read_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported PNM magic {magic!r} in {path}")
    width, pos = _read_token(data, pos)
    height, pos = _read_token(data, pos)
    maxval, pos = _read_token(data, pos)
    w, h, mv = int(width), int(height), int(maxval)
    if mv <= 0 or mv > 255:
        raise ValueError(f"only 8-bit PNM supported, maxval was {mv}")
    pos += 1  # single whitespace after maxval
    channels = 1 if magic == b"P5" else 3
    need = w * h * channels
    raw = data[pos:pos + need]
    if len(raw) != need:
        raise ValueError(f"PNM payload truncated: expected {need} bytes, got {len(raw)}")
    arr = np.frombuffer(raw, dtype=np.uint8)
    return arr.reshape((h, w) if channels == 1 else (h, w, 3)).copy()


def _write_pnm(path, magic: bytes, arr: np.ndarray, comment: str | None):
    h, w = arr.shape[:2]
    header = magic + b"\n"
    if comment:
        for line in comment.splitlines():
            header += b"# " + line.encode("ascii") + b"\n"
    header += f"{w} {h}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.astype(np.uint8).tobytes())


def write_pgm(path, gray, comment: str | None = None):
    arr = np.asarray(gray)
    if arr.ndim != 2:
        raise ValueError(f"PGM needs a 2-D array, got shape {arr.shape}")
    _write_pnm(path, b"P5", arr, comment)


def write_ppm(path, rgb, comment: str | None = None):
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"PPM needs a (h, w, 3) array, got shape {arr.shape}")
    _write_pnm(path, b"P6", arr, comment)


def write_entropy_pgm(path, entropy_map, window: int = 3):
    """Write an entropy map as PGM, scaled so 255 = log2(window^2) bits."""
    top = max_entropy_bits(window)
    m = np.asarray(entropy_map, dtype=np.float64)
    scaled = np.floor(m * (255.0 / top) + 0.5)
    comment = (f"entropy map, linear scale: pixel 255 = {top:.6f} bits "
               f"(window {window}x{window})")
    write_pgm(path, np.clip(scaled, 0, 255).astype(np.uint8), comment)
