"""Portable graymap (PGM) reading and writing.

Images are stored as 16-bit PGMs (maxval 65535, big-endian sample order in
the binary P5 variant, per the format). Segmentation masks use 8-bit PGMs
(maxval 255). Both the ASCII P2 and binary P5 flavors are accepted on read;
writes always emit P5.
"""

from __future__ import annotations

import numpy as np

from .images import NUM_REGION_CLASSES, SegmentationMask, ThermalImage

IMAGE_MAXVAL = 65535
MASK_MAXVAL = 255


class PgmError(ValueError):
    """Raised for malformed or unsupported PGM payloads."""


def _tokenize_header(data: bytes, count: int) -> tuple[list[int], int]:
    """Read `count` whitespace-separated integer tokens after the magic.

    Comment lines (starting '#') are skipped. Returns the tokens and the
    offset one past the single whitespace byte that terminates the last one.
    """
    tokens: list[int] = []
    i = 2  # past the 2-byte magic
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace():
            i += 1
        if i >= n and start == i:
            raise PgmError("malformed header: truncated before raster")
        tok = data[start:i]
        if not tok.isdigit():
            raise PgmError(f"malformed header: expected integer, got {tok!r}")
        tokens.append(int(tok))
        i += 1  # consume exactly one whitespace byte after the token
    return tokens, i


def _parse(data: bytes) -> tuple[np.ndarray, int]:
    """Decode PGM bytes to an (h, w) uint array plus the declared maxval."""
    if len(data) < 2:
        raise PgmError("bad magic: file too short")
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise PgmError(f"bad magic: expected P2 or P5, got {magic!r}")
    (width, height, maxval), offset = _tokenize_header(data, 3)
    if width <= 0 or height <= 0:
        raise PgmError("malformed header: non-positive dimensions")
    if maxval not in (IMAGE_MAXVAL, MASK_MAXVAL):
        raise PgmError(f"unsupported maxval {maxval}: expected 255 or 65535")
    n = width * height
    if magic == b"P2":
        fields = data[offset:].split()
        if len(fields) < n:
            raise PgmError("truncated payload: fewer samples than promised")
        try:
            flat = np.array([int(f) for f in fields[:n]], dtype=np.int64)
        except ValueError as exc:
            raise PgmError(f"malformed ascii sample: {exc}") from exc
    else:
        itemsize = 2 if maxval > 255 else 1
        raw = data[offset : offset + n * itemsize]
        if len(raw) < n * itemsize:
            raise PgmError("truncated payload: fewer bytes than promised")
        dtype = ">u2" if itemsize == 2 else np.uint8
        flat = np.frombuffer(raw, dtype=dtype).astype(np.int64)
    if flat.min() < 0 or flat.max() > maxval:
        raise PgmError("sample out of range for declared maxval")
    return flat.reshape(height, width), maxval


def load_pgm_image(path, temp_floor: float = 20.0, temp_ceil: float = 40.0) -> ThermalImage:
    """Load a 16-bit PGM as a ThermalImage (samples scaled by 1/65535)."""
    with open(path, "rb") as f:
        grid, maxval = _parse(f.read())
    if maxval != IMAGE_MAXVAL:
        raise PgmError(f"unsupported maxval {maxval} for image: expected 65535")
    return ThermalImage(grid.astype(np.float64) / IMAGE_MAXVAL, temp_floor, temp_ceil)


def save_pgm_image(path, img: ThermalImage) -> None:
    """Write a ThermalImage as a binary 16-bit PGM (nearest quantization)."""
    q = np.rint(img.values * IMAGE_MAXVAL).astype(">u2")
    header = f"P5\n{img.width} {img.height}\n{IMAGE_MAXVAL}\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header + q.tobytes())


def load_pgm_mask(path) -> SegmentationMask:
    """Load an 8-bit PGM as a SegmentationMask (samples are label ids)."""
    with open(path, "rb") as f:
        grid, maxval = _parse(f.read())
    if maxval != MASK_MAXVAL:
        raise PgmError(f"unsupported maxval {maxval} for mask: expected 255")
    if grid.max() >= NUM_REGION_CLASSES:
        raise PgmError(f"mask sample exceeds last region label {NUM_REGION_CLASSES - 1}")
    return SegmentationMask(grid)


def save_pgm_mask(path, mask: SegmentationMask) -> None:
    """Write a SegmentationMask as a binary 8-bit PGM."""
    q = mask.labels.astype(np.uint8)
    header = f"P5\n{mask.width} {mask.height}\n{MASK_MAXVAL}\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header + q.tobytes())
