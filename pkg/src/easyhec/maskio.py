"""Mask image I/O: binary PGM (P5) output, PGM or grayscale PNG input.

Masks are float64 arrays of shape (H, W) with values in [0, 1]; byte
values 0..255 map linearly onto that range.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError, ParseError


def validate_mask(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2:
        raise InvalidArgumentError("mask must be a 2-D array")
    if not np.all(np.isfinite(mask)) or mask.min() < 0.0 or mask.max() > 1.0:
        raise InvalidArgumentError("mask values must be finite and within [0, 1]")
    return mask


def write_pgm(path: str, mask: np.ndarray) -> None:
    mask = validate_mask(mask)
    h, w = mask.shape
    data = np.clip(np.rint(mask * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def _read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    # header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed; pixel data follows the single whitespace
    # character after maxval
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header", path)
        tokens.append(raw[start:pos])
    pos += 1  # the single whitespace after maxval
    if tokens[0] != b"P5":
        raise ParseError(f"unsupported PGM magic {tokens[0]!r}", path)
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise ParseError("bad PGM header", path) from None
    if maxval != 255:
        raise ParseError(f"only maxval 255 supported, got {maxval}", path)
    if len(raw) - pos < w * h:
        raise ParseError("truncated PGM pixel data", path)
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos)
    return data.reshape(h, w).astype(np.float64) / 255.0


def read_mask(path: str) -> np.ndarray:
    """Read a PGM (P5) or grayscale PNG mask file."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
    if magic.startswith(b"P5"):
        return _read_pgm(path)
    if magic.startswith(b"\x89PNG"):
        from PIL import Image

        img = Image.open(path).convert("L")
        return np.asarray(img, dtype=np.float64) / 255.0
    raise ParseError("unrecognized mask format (expected PGM P5 or PNG)", path)
