"""Single-channel ink rasters and their binary PGM (P5) serialization.

Ink polarity is 0 = blank paper, 1 = full ink, so zero-initialized buffers
mean "blank".  Standard grayscale images (255 = white paper) must be
inverted on import; the P5 files written here store ``round(255 * ink)``
directly and are intended as bit-exact fixtures, not display images.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptFileError, InvalidInputError

INK_LEVELS = 255


def quantize_ink(ink: np.ndarray) -> np.ndarray:
    """Snap intensities to the 1/255 grid used by the P5 fixtures.

    Quantizing after every stroke keeps an in-memory canvas bit-identical
    to its PGM round trip, which the export and replay paths rely on.
    """
    return np.rint(np.asarray(ink, dtype=np.float64) * INK_LEVELS) / INK_LEVELS


@dataclass(frozen=True)
class SketchRaster:
    """Immutable ink-intensity raster.

    ``ink`` is a row-major (height, width) float64 array with every value
    in [0, 1].  The array is frozen on construction; derive new rasters
    instead of mutating.
    """

    ink: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.ink, dtype=np.float64)
        if arr.ndim != 2:
            raise InvalidInputError(f"ink must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("ink contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise InvalidInputError(
                f"ink outside [0, 1]: min={arr.min()}, max={arr.max()}"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "ink", arr)

    @property
    def width(self) -> int:
        return self.ink.shape[1]

    @property
    def height(self) -> int:
        return self.ink.shape[0]

    @property
    def ink_mass(self) -> float:
        return float(self.ink.sum())

    @classmethod
    def blank(cls, width: int, height: int) -> "SketchRaster":
        if width < 1 or height < 1:
            raise InvalidInputError("raster dimensions must be positive")
        return cls(np.zeros((height, width)))

    def quantized(self) -> "SketchRaster":
        return SketchRaster(quantize_ink(self.ink))


def raw_pgm_bytes(values: np.ndarray) -> bytes:
    """Binary P5 blob for an already-quantized (H, W) uint8 level array."""
    levels = np.asarray(values)
    if levels.ndim != 2:
        raise InvalidInputError("P5 data must be 2-D")
    header = f"P5\n{levels.shape[1]} {levels.shape[0]}\n{INK_LEVELS}\n"
    return header.encode("ascii") + levels.astype(np.uint8).tobytes()


def pgm_bytes(raster: SketchRaster) -> bytes:
    return raw_pgm_bytes(np.rint(raster.ink * INK_LEVELS))


def write_pgm(raster: SketchRaster, path: str | Path) -> None:
    """Write a binary P5 file, maxval 255, intensity = round(255 * ink)."""
    Path(path).write_bytes(pgm_bytes(raster))


def read_pgm(path: str | Path) -> SketchRaster:
    return parse_pgm(Path(path).read_bytes())


def parse_pgm(blob: bytes) -> SketchRaster:
    """Parse a binary P5 blob written by :func:`write_pgm`.

    Comments are tolerated in the header; only maxval 255 is accepted.
    """
    if not blob.startswith(b"P5"):
        raise CorruptFileError("not a binary PGM (missing P5 magic)")
    # Header = magic + 3 whitespace-separated tokens, '#' comments allowed.
    pos = 2
    tokens = []
    while len(tokens) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        m = re.match(rb"\d+", blob[pos:])
        if not m:
            raise CorruptFileError("malformed PGM header")
        tokens.append(int(m.group()))
        pos += m.end()
    pos += 1  # single whitespace after maxval
    width, height, maxval = tokens
    if maxval != INK_LEVELS:
        raise CorruptFileError(f"unsupported PGM maxval {maxval}, expected 255")
    expected = width * height
    data = blob[pos : pos + expected]
    if len(data) != expected:
        raise CorruptFileError(
            f"PGM payload truncated: expected {expected} bytes, got {len(data)}"
        )
    ink = np.frombuffer(data, dtype=np.uint8).astype(np.float64) / INK_LEVELS
    return SketchRaster(ink.reshape(height, width))
