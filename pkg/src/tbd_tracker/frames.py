"""
Frames and the PGM codec used for backgrounds and frame dumps

Raw 8-bit rasters are decoded by Pillow, and written by it when the file
carries no comments. 16-bit and plain (P2) files use the codec here.

Pixel arrays are indexed pixels[i, j] with i along x (n cells) and j along
y (m cells). PGM rasters store rows along y, so images are transposed on
the way in and out.
"""

import logging
import re
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .exceptions import FrameIOError, UsageError

logger = logging.getLogger(__name__)

PGM_PLAIN = b"P2"
PGM_RAW = b"P5"
PGM_MAX_VALUE = 65535
BYTE_MAX_VALUE = 255
SCALE_COMMENT = "tbd-scale"
HEADER_TOKENS = 4  # magic, width, height, maxval


@dataclass(eq=False)
class Frame:
    """One sensor frame of real-valued pixel intensities"""

    pixels: np.ndarray
    step: int = 0

    def __post_init__(self) -> None:
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2:  # noqa: PLR2004
            raise UsageError(f"Frame must be two-dimensional, got {self.pixels.shape}")
        if not np.all(np.isfinite(self.pixels)):
            raise UsageError(f"Frame {self.step} contains non-finite pixels")

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape  # type: ignore[return-value]

    @property
    def n(self) -> int:
        return self.pixels.shape[0]

    @property
    def m(self) -> int:
        return self.pixels.shape[1]

    def with_pixels(self, pixels: np.ndarray) -> "Frame":
        return Frame(pixels=pixels, step=self.step)


@dataclass(eq=False)
class PgmImage:
    """Raw PGM raster as stored on disk (rows along y)"""

    data: np.ndarray
    maxval: int
    comments: list[str] = field(default_factory=list)

    @property
    def scale(self) -> tuple[float, float] | None:
        """Value range recorded by save_frame, if present"""
        for comment in self.comments:
            parts = comment.split()
            if len(parts) == 3 and parts[0] == SCALE_COMMENT:  # noqa: PLR2004
                return float(parts[1]), float(parts[2])
        return None


def _read_header(path: Path, raw: bytes) -> tuple[list[bytes], list[str], int]:
    """Split the PGM header into tokens, comments and the data offset"""
    tokens: list[bytes] = []
    comments: list[str] = []
    pos = 0
    while len(tokens) < HEADER_TOKENS:
        if pos >= len(raw):
            raise FrameIOError(path, "truncated PGM header")
        char = raw[pos : pos + 1]
        if char == b"#":
            end = raw.find(b"\n", pos)
            end = len(raw) if end == -1 else end
            comments.append(raw[pos + 1 : end].decode("ascii", "replace").strip())
            pos = end + 1
        elif char.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(raw) and not raw[pos : pos + 1].isspace():
                if raw[pos : pos + 1] == b"#":
                    break
                pos += 1
            tokens.append(raw[start:pos])
    return tokens, comments, pos


def _parse_dimensions(path: Path, tokens: list[bytes]) -> tuple[int, int, int]:
    try:
        width, height, maxval = (int(token) for token in tokens[1:])
    except ValueError as e:
        raise FrameIOError(path, f"invalid PGM header: {e}") from e
    if width <= 0 or height <= 0 or not 0 < maxval <= PGM_MAX_VALUE:
        raise FrameIOError(path, f"invalid PGM geometry {width}x{height}/{maxval}")
    return width, height, maxval


def _decode_raster(
    path: Path, magic: bytes, body: bytes, count: int, maxval: int
) -> np.ndarray:
    if magic == PGM_PLAIN:
        values = re.sub(rb"#[^\n]*", b"", body).split()
        if len(values) < count:
            raise FrameIOError(path, f"expected {count} samples, found {len(values)}")
        return np.array(values[:count], dtype=np.int64)
    dtype = np.dtype(">u2") if maxval > BYTE_MAX_VALUE else np.dtype("u1")
    if len(body) < count * dtype.itemsize:
        raise FrameIOError(path, "truncated PGM raster")
    return np.frombuffer(body, dtype=dtype, count=count).astype(np.int64)


def _read_byte_raster(path: Path, width: int, height: int) -> np.ndarray:
    try:
        with Image.open(path, formats=["PPM"]) as image:
            data = np.asarray(image, dtype=np.int64)
    except (OSError, ValueError) as e:
        raise FrameIOError(path, f"unreadable PGM raster: {e}") from e
    if data.shape != (height, width):
        raise FrameIOError(path, f"raster is {data.shape}, header says {height}x{width}")
    return data


def _write_byte_raster(path: Path, raster: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(raster.astype(np.uint8)).save(path, format="PPM")


def read_pgm(path: str | Path) -> PgmImage:
    """Read a plain (P2) or raw (P5) PGM file of 8 or 16 bits"""
    pgm_path = Path(path)
    try:
        raw = pgm_path.read_bytes()
    except FileNotFoundError as e:
        raise FrameIOError(pgm_path, "file not found") from e
    except OSError as e:
        raise FrameIOError(pgm_path, str(e)) from e

    tokens, comments, pos = _read_header(pgm_path, raw)
    magic = tokens[0]
    if magic not in (PGM_PLAIN, PGM_RAW):
        raise FrameIOError(pgm_path, f"unsupported magic {magic!r}")
    width, height, maxval = _parse_dimensions(pgm_path, tokens)
    if magic == PGM_RAW and maxval == BYTE_MAX_VALUE:
        data = _read_byte_raster(pgm_path, width, height)
    else:
        # exactly one whitespace byte separates the header from the raster
        data = _decode_raster(pgm_path, magic, raw[pos + 1 :], width * height, maxval)
    if np.any(data > maxval):
        raise FrameIOError(pgm_path, "sample exceeds maxval")
    return PgmImage(data=data.reshape(height, width), maxval=maxval, comments=comments)


def write_pgm(
    path: str | Path,
    data: np.ndarray,
    maxval: int,
    comments: Iterable[str] = (),
    plain: bool = False,
) -> None:
    """
    Write an integer raster (rows along y) as PGM.

    Raw 8-bit rasters without comments go through Pillow; 16-bit, plain
    and commented files are encoded here.
    """
    pgm_path = Path(path)
    raster = np.asarray(data)
    comments = list(comments)
    if raster.ndim != 2 or not 0 < maxval <= PGM_MAX_VALUE:  # noqa: PLR2004
        raise UsageError(f"Cannot encode raster {raster.shape} with maxval {maxval}")
    if not plain and maxval == BYTE_MAX_VALUE and not comments:
        try:
            _write_byte_raster(pgm_path, raster)
        except OSError as e:
            raise FrameIOError(pgm_path, str(e)) from e
        return
    height, width = raster.shape
    header = (PGM_PLAIN if plain else PGM_RAW).decode() + "\n"
    header += "".join(f"# {comment}\n" for comment in comments)
    header += f"{width} {height}\n{maxval}\n"
    if plain:
        rows = (" ".join(str(int(v)) for v in row) for row in raster)
        body = ("\n".join(rows) + "\n").encode("ascii")
    else:
        dtype = ">u2" if maxval > BYTE_MAX_VALUE else "u1"
        body = raster.astype(dtype).tobytes()
    try:
        pgm_path.parent.mkdir(parents=True, exist_ok=True)
        pgm_path.write_bytes(header.encode("ascii") + body)
    except OSError as e:
        raise FrameIOError(pgm_path, str(e)) from e


def save_frame(
    path: str | Path,
    frame: Frame,
    low: float | None = None,
    high: float | None = None,
    maxval: int = PGM_MAX_VALUE,
) -> None:
    """
    Quantise a frame to PGM, recording the value range in a comment.

    Without an explicit range the frame's own minimum and maximum are used,
    so a dump decodes back to within one quantisation step.
    """
    low = float(frame.pixels.min()) if low is None else low
    high = float(frame.pixels.max()) if high is None else high
    span = high - low if high > low else 1.0
    scaled = np.clip((frame.pixels - low) / span, 0.0, 1.0)
    raster = np.rint(scaled * maxval).astype(np.int64).T
    write_pgm(
        path,
        raster,
        maxval,
        comments=[f"{SCALE_COMMENT} {low!r} {high!r}", f"step {frame.step}"],
    )


def load_frame(
    path: str | Path,
    low: float | None = None,
    high: float | None = None,
    step: int = 0,
) -> Frame:
    """
    Decode a PGM into a frame.

    The range comes from the arguments, else from the scale comment written
    by save_frame, else [0, 1].
    """
    image = read_pgm(path)
    recorded = image.scale
    if low is None or high is None:
        low, high = recorded if recorded is not None else (0.0, 1.0)
    span = high - low if high > low else 1.0
    pixels = low + image.data.astype(np.float64) / image.maxval * span
    return Frame(pixels=pixels.T, step=step)


def load_background(
    path: str | Path, low: float, high: float, shape: tuple[int, int] | None = None
) -> Frame:
    """Load a background image scaled linearly into [low, high]"""
    frame = load_frame(path, low, high)
    if shape is not None and frame.shape != shape:
        raise FrameIOError(
            path, f"background is {frame.shape[0]}x{frame.shape[1]}, expected {shape}"
        )
    logger.debug(f"Loaded background {path} scaled to [{low}, {high}]")
    return frame
