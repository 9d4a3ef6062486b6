"""
Grayscale image container and PGM (P2/P5) codec.

Pixels are stored as a row-major (lexicographic) luminance vector where -1 is
black and +1 is white. 8-bit gray levels map affinely onto that range.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import numpy.typing as npt

from vbsr.exceptions import DomainError, PGMFormatError

FloatArray = npt.NDArray[np.float64]

MAX_GRAY = 255


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Immutable luminance image, lexicographically stacked.

    Equality and hashing compare the size and the exact pixel values.
    """

    width: int
    height: int
    data: FloatArray = field(repr=False)

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise DomainError(f"image size must be positive, got {self.width}x{self.height}")
        values = np.array(self.data, dtype=np.float64).reshape(-1)
        if values.size != self.width * self.height:
            raise DomainError(
                f"data length {values.size} does not match {self.width}x{self.height}"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("image data must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "data", values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GrayImage):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.data, other.data)
        )

    def __hash__(self) -> int:
        return hash((self.width, self.height, self.data.tobytes()))

    @classmethod
    def from_array(cls, pixels: npt.ArrayLike) -> GrayImage:
        """Build from a (height, width) array."""
        arr = np.asarray(pixels, dtype=np.float64)
        if arr.ndim != 2:
            raise DomainError(f"expected a 2-D array, got shape {arr.shape}")
        return cls(width=arr.shape[1], height=arr.shape[0], data=arr.reshape(-1))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    def as_array(self) -> FloatArray:
        """Writable (height, width) copy of the pixels."""
        return self.data.reshape(self.height, self.width).copy()


def gray_to_luminance(levels: npt.ArrayLike, maxval: int = MAX_GRAY) -> FloatArray:
    """Map gray levels in [0, maxval] to luminance in [-1, 1]."""
    return 2.0 * (np.asarray(levels, dtype=np.float64) / maxval) - 1.0


def luminance_to_gray(luminance: npt.ArrayLike) -> npt.NDArray[np.uint8]:
    """Inverse of :func:`gray_to_luminance` with clamping and half-away rounding."""
    scaled = (np.asarray(luminance, dtype=np.float64) + 1.0) * (MAX_GRAY / 2.0)
    clamped = np.clip(scaled, 0.0, float(MAX_GRAY))
    # Values are non-negative here, so floor(v + 0.5) rounds half away from zero
    return np.floor(clamped + 0.5).astype(np.uint8)


class _HeaderReader:
    """Whitespace/comment aware token reader that tracks byte offsets."""

    def __init__(self, payload: bytes) -> None:
        self.payload = payload
        self.pos = 0

    def _skip_separators(self) -> None:
        data = self.payload
        while self.pos < len(data):
            ch = data[self.pos : self.pos + 1]
            if ch.isspace():
                self.pos += 1
            elif ch == b"#":
                end = data.find(b"\n", self.pos)
                self.pos = len(data) if end < 0 else end + 1
            else:
                break

    def token(self, what: str) -> bytes:
        self._skip_separators()
        start = self.pos
        data = self.payload
        while self.pos < len(data) and not data[self.pos : self.pos + 1].isspace():
            if data[self.pos : self.pos + 1] == b"#":
                break
            self.pos += 1
        if self.pos == start:
            raise PGMFormatError(f"missing {what}", start)
        return data[start : self.pos]

    def integer(self, what: str) -> int:
        start = self.pos
        raw = self.token(what)
        if not raw.isdigit():
            raise PGMFormatError(f"invalid {what} {raw!r}", start)
        return int(raw)


def parse_pgm(payload: bytes) -> GrayImage:
    """Decode an 8-bit binary (P5) or ASCII (P2) PGM byte string."""
    if len(payload) < 2:
        raise PGMFormatError("truncated magic number", 0)
    magic = payload[:2]
    if magic not in {b"P2", b"P5"}:
        raise PGMFormatError(f"unsupported magic number {magic!r}", 0)

    reader = _HeaderReader(payload)
    reader.pos = 2
    width = reader.integer("width")
    height = reader.integer("height")
    maxval_offset = reader.pos
    maxval = reader.integer("maxval")
    if width < 1 or height < 1:
        raise PGMFormatError(f"invalid image size {width}x{height}", maxval_offset)
    if not 0 < maxval <= MAX_GRAY:
        raise PGMFormatError(f"only 8-bit PGM is supported, maxval={maxval}", maxval_offset)

    n_pixels = width * height
    if magic == b"P5":
        # Exactly one whitespace byte separates the header from the raster
        start = reader.pos + 1
        raster = payload[start : start + n_pixels]
        if len(raster) < n_pixels:
            raise PGMFormatError(
                f"truncated raster: expected {n_pixels} bytes, found {len(raster)}",
                start + len(raster),
            )
        levels = np.frombuffer(raster, dtype=np.uint8).astype(np.float64)
        bad = np.flatnonzero(levels > maxval)
        if bad.size:
            raise PGMFormatError(f"gray level above maxval {maxval}", start + int(bad[0]))
    else:
        values: list[int] = []
        for _ in range(n_pixels):
            offset = reader.pos
            try:
                level = reader.integer("gray level")
            except PGMFormatError as exc:
                raise PGMFormatError(
                    f"truncated raster: expected {n_pixels} values, found {len(values)}",
                    exc.offset,
                ) from exc
            if level > maxval:
                raise PGMFormatError(f"gray level {level} above maxval {maxval}", offset)
            values.append(level)
        levels = np.asarray(values, dtype=np.float64)

    return GrayImage(width=width, height=height, data=gray_to_luminance(levels, maxval))


def load_pgm(path: Path | str) -> GrayImage:
    """Read a PGM file from disk.

    Raises:
        FileNotFoundError: If the file doesn't exist
        PGMFormatError: If the header or raster is malformed
    """
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"PGM file not found: {p}")
    return parse_pgm(p.read_bytes())


def encode_pgm(image: GrayImage, binary: bool = True) -> bytes:
    """Encode as P5 (default) or P2 with 8-bit depth."""
    levels = luminance_to_gray(image.data)
    header = f"{'P5' if binary else 'P2'}\n{image.width} {image.height}\n{MAX_GRAY}\n".encode()
    if binary:
        return header + levels.tobytes()
    rows = levels.reshape(image.height, image.width)
    body = "\n".join(" ".join(str(int(v)) for v in row) for row in rows)
    return header + body.encode() + b"\n"


def save_pgm(image: GrayImage, path: Path | str, binary: bool = True) -> Path:
    """Write a PGM file, creating parent directories as needed."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(encode_pgm(image, binary=binary))
    return p
