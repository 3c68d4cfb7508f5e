"""
Readers and writers for 8-bit sample planes.

Supported formats: binary PGM (P5, maxval 255), raw 8-bit Y planes with an
explicit geometry, and raw planar YUV 4:2:0 files (Y, then U, then V per frame).
"""

import logging
from enum import Enum
from pathlib import Path

import numpy as np

from cnnpost.errors import (
    FormatError,
    MalformedHeaderError,
    ShapeMismatchError,
    TruncatedDataError,
    UnsupportedMaxvalError,
)
from cnnpost.tensor import Plane

logger = logging.getLogger(__name__)


class PlaneFormat(str, Enum):
    PGM = "pgm"
    RAW = "raw"
    YUV420 = "yuv420"

    @classmethod
    def guess(cls, path: Path) -> "PlaneFormat":
        suffix = path.suffix.lower()
        if suffix == ".pgm":
            return cls.PGM
        if suffix == ".yuv":
            return cls.YUV420
        return cls.RAW


def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read `count` whitespace-separated header tokens, skipping '#' comments.

    Returns the tokens and the offset of the single whitespace byte ending the header.
    """
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise MalformedHeaderError("PGM header ended before magic, width, height and maxval were read")
        tokens.append(data[start:pos])
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise MalformedHeaderError("PGM header must end with a single whitespace byte")
    return tokens, pos


def parse_pgm(data: bytes) -> Plane:
    tokens, end = _pgm_tokens(data, 4)
    magic, *numbers = tokens
    if magic != b"P5":
        raise MalformedHeaderError(f"Expected binary PGM magic 'P5', found {magic!r}")
    try:
        width, height, maxval = (int(t) for t in numbers)
    except ValueError:
        raise MalformedHeaderError(f"Non-numeric PGM header fields: {numbers!r}") from None
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"PGM dimensions must be positive, got {width}x{height}")
    if maxval != 255:
        raise UnsupportedMaxvalError(maxval)
    payload = data[end + 1:]
    if len(payload) < width * height:
        raise TruncatedDataError(
            f"PGM truncated: {width}x{height} needs {width * height} bytes, found {len(payload)}"
        )
    samples = np.frombuffer(payload, dtype=np.uint8, count=width * height).reshape(height, width)
    return Plane.from_array(samples)


def load_plane(path: str | Path, format: PlaneFormat | str = PlaneFormat.PGM,
               width: int | None = None, height: int | None = None) -> Plane:
    """Load one plane from a PGM file or a raw Y file of the given geometry."""
    path = Path(path)
    format = PlaneFormat(format)
    data = path.read_bytes()
    if format is PlaneFormat.PGM:
        return parse_pgm(data)
    if format is PlaneFormat.RAW:
        if width is None or height is None:
            raise FormatError("Raw planes need an explicit width and height")
        if len(data) < width * height:
            raise TruncatedDataError(
                f"Raw plane truncated: {width}x{height} needs {width * height} bytes, found {len(data)}"
            )
        return Plane.from_array(np.frombuffer(data, dtype=np.uint8, count=width * height).reshape(height, width))
    raise FormatError("Use load_yuv420_frame for YUV 4:2:0 files")


def yuv420_frame_size(width: int, height: int) -> int:
    return width * height * 3 // 2


def _check_yuv_geometry(width: int, height: int) -> None:
    if width < 2 or height < 2 or width % 2 or height % 2:
        raise FormatError(f"YUV 4:2:0 needs even positive dimensions, got {width}x{height}")


def count_yuv420_frames(path: str | Path, width: int, height: int) -> int:
    _check_yuv_geometry(width, height)
    return Path(path).stat().st_size // yuv420_frame_size(width, height)


def load_yuv420_frame(path: str | Path, width: int, height: int, frame_index: int = 0) -> tuple[Plane, Plane, Plane]:
    _check_yuv_geometry(width, height)
    frame_size = yuv420_frame_size(width, height)
    if frame_index < 0:
        raise FormatError(f"Frame index must be non-negative, got {frame_index}")
    with open(path, "rb") as f:
        f.seek(frame_index * frame_size)
        data = f.read(frame_size)
    if len(data) < frame_size:
        raise TruncatedDataError(
            f"{path}: frame {frame_index} of a {width}x{height} 4:2:0 file is beyond the end of the file"
        )
    luma = width * height
    chroma = luma // 4
    buf = np.frombuffer(data, dtype=np.uint8)
    y = buf[:luma].reshape(height, width)
    u = buf[luma:luma + chroma].reshape(height // 2, width // 2)
    v = buf[luma + chroma:].reshape(height // 2, width // 2)
    return Plane.from_array(y), Plane.from_array(u), Plane.from_array(v)


def save_pgm(plane: Plane, path: str | Path) -> int:
    header = f"P5\n{plane.width} {plane.height}\n255\n".encode("ascii")
    payload = header + plane.samples.tobytes()
    Path(path).write_bytes(payload)
    return len(payload)


def save_raw(plane: Plane, path: str | Path) -> int:
    payload = plane.samples.tobytes()
    Path(path).write_bytes(payload)
    return len(payload)


def write_yuv420_frame(planes: tuple[Plane, Plane, Plane], path: str | Path, append: bool = False) -> int:
    y, u, v = planes
    expected = (y.height // 2, y.width // 2)
    for name, chroma in (("U", u), ("V", v)):
        if chroma.shape != expected:
            raise ShapeMismatchError(f"{name} plane for a {y.width}x{y.height} frame", chroma.shape, expected)
    payload = y.samples.tobytes() + u.samples.tobytes() + v.samples.tobytes()
    with open(path, "ab" if append else "wb") as f:
        f.write(payload)
    return len(payload)
