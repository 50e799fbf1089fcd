"""Grayscale image thresholding driven by the optimizer.

Reads PGM/PPM files (ASCII P2/P3 and binary P5/P6, maxval 255 only),
builds the intensity histogram, and finds the threshold maximizing the
between-class variance

    sigma_b^2(t) = omega_0 * omega_1 * (mu_0 - mu_1)^2

where class 0 holds the intensities <= t. Two searchers are provided: an
exhaustive scan over all 256 thresholds (the oracle) and the optimizer
running on a one-dimensional box [0, 255] with the continuous position
rounded half-up inside the objective. Because rounding collapses the
search space onto the same 256 integers the oracle enumerates, a healthy
run attains exactly the oracle's maximal variance.

Color input is converted to grayscale with the usual luminance weights
0.299 R + 0.587 G + 0.114 B, rounded half-up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .core import ApoConfig
from .engine import EngineMode, RunResult, run
from .objectives import Bounds, table_objective

_WHITESPACE = b" \t\n\r\x0b\x0c"


class ImageFormatError(ValueError):
    """Malformed image data; ``offset`` is the byte position at fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte {offset})")
        self.offset = offset


@dataclass
class GrayImage:
    """8-bit grayscale raster, row-major, shape (height, width)."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 2 or self.pixels.size == 0:
            raise ValueError(f"pixels must be a non-empty 2-D array, got shape {self.pixels.shape}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class Histogram:
    """Intensity counts over 0..255 plus their total."""

    counts: np.ndarray
    total: int

    def __post_init__(self) -> None:
        self.counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        if self.counts.shape != (256,):
            raise ValueError("counts must have exactly 256 entries")
        if int(self.counts.sum()) != self.total or self.total <= 0:
            raise ValueError("total must be positive and equal the sum of counts")


class _Reader:
    """Cursor over header bytes, tracking offsets for error reporting."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def _skip_filler(self) -> None:
        data = self.data
        while self.pos < len(data):
            b = data[self.pos : self.pos + 1]
            if b in (b"#",):
                while self.pos < len(data) and data[self.pos : self.pos + 1] not in (b"\n", b"\r"):
                    self.pos += 1
            elif b in (b" ", b"\t", b"\n", b"\r", b"\x0b", b"\x0c"):
                self.pos += 1
            else:
                return

    def token(self, what: str) -> tuple:
        self._skip_filler()
        if self.pos >= len(self.data):
            raise ImageFormatError(f"unexpected end of data while reading {what}", len(self.data))
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos : self.pos + 1] not in (
            b" ", b"\t", b"\n", b"\r", b"\x0b", b"\x0c", b"#",
        ):
            self.pos += 1
        return self.data[start : self.pos], start

    def int_token(self, what: str) -> tuple:
        tok, start = self.token(what)
        if not tok.isdigit():
            raise ImageFormatError(f"expected an unsigned integer for {what}, got {tok[:20]!r}", start)
        return int(tok), start

    def skip_one_whitespace(self) -> None:
        # Binary rasters start right after a single whitespace byte.
        if self.pos >= len(self.data) or self.data[self.pos : self.pos + 1] not in (
            b" ", b"\t", b"\n", b"\r", b"\x0b", b"\x0c",
        ):
            raise ImageFormatError("expected a whitespace byte before the raster", self.pos)
        self.pos += 1


def _luminance(rgb: np.ndarray) -> np.ndarray:
    r = rgb[..., 0].astype(np.float64)
    g = rgb[..., 1].astype(np.float64)
    b = rgb[..., 2].astype(np.float64)
    y = np.floor(0.299 * r + 0.587 * g + 0.114 * b + 0.5)
    return np.clip(y, 0.0, 255.0).astype(np.uint8)


def load_image(data: bytes) -> GrayImage:
    """Parse PGM (P2/P5) or PPM (P3/P6) bytes into a grayscale image.

    Only maxval 255 is supported. Color images are converted by luminance.
    Raises :class:`ImageFormatError` carrying the byte offset of the first
    problem.
    """
    if not isinstance(data, (bytes, bytearray)):
        raise TypeError("load_image expects bytes")
    reader = _Reader(bytes(data))
    magic, magic_off = reader.token("the format magic")
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise ImageFormatError(f"unsupported format magic {magic[:8]!r}; expected P2, P3, P5 or P6", magic_off)
    color = magic in (b"P3", b"P6")
    binary = magic in (b"P5", b"P6")
    width, w_off = reader.int_token("the width")
    height, h_off = reader.int_token("the height")
    if width < 1:
        raise ImageFormatError(f"width must be >= 1, got {width}", w_off)
    if height < 1:
        raise ImageFormatError(f"height must be >= 1, got {height}", h_off)
    maxval, m_off = reader.int_token("the maximum value")
    if maxval != 255:
        raise ImageFormatError(f"only maxval 255 is supported, got {maxval}", m_off)

    channels = 3 if color else 1
    count = width * height * channels
    if binary:
        reader.skip_one_whitespace()
        raster = reader.data[reader.pos : reader.pos + count]
        if len(raster) < count:
            raise ImageFormatError(
                f"raster truncated: expected {count} bytes, found {len(raster)}", len(reader.data)
            )
        values = np.frombuffer(raster, dtype=np.uint8, count=count)
    else:
        flat = np.empty(count, dtype=np.uint8)
        for n in range(count):
            value, off = reader.int_token("a raster value")
            if value > 255:
                raise ImageFormatError(f"raster value {value} exceeds maxval 255", off)
            flat[n] = value
        values = flat
    if color:
        rgb = values.reshape(height, width, 3)
        return GrayImage(_luminance(rgb))
    return GrayImage(values.reshape(height, width))


def load_image_file(path) -> GrayImage:
    with open(path, "rb") as fh:
        return load_image(fh.read())


def write_pgm(img: GrayImage, binary: bool = True) -> bytes:
    """Serialize to P5 (binary, default) or P2 (ASCII) bytes.

    A P2 round trip through :func:`load_image` is pixel-exact.
    """
    header = f"{'P5' if binary else 'P2'}\n{img.width} {img.height}\n255\n".encode("ascii")
    if binary:
        return header + img.pixels.tobytes()
    lines = [" ".join(str(int(v)) for v in row) for row in img.pixels]
    return header + ("\n".join(lines) + "\n").encode("ascii")


def histogram(img: GrayImage) -> Histogram:
    """Intensity histogram of the image."""
    counts = np.bincount(img.pixels.ravel(), minlength=256).astype(np.int64)
    return Histogram(counts, int(img.pixels.size))


def between_class_variance(hist: Histogram, t: int) -> float:
    """Between-class variance of the split at threshold ``t``.

    Class 0 holds intensities <= t. Returns 0.0 whenever either class is
    empty. Depends only on count ratios, so scaling all counts by a common
    factor leaves it unchanged.
    """
    if not 0 <= t <= 255:
        raise ValueError(f"t must be in [0, 255], got {t}")
    counts = hist.counts
    n0 = int(np.sum(counts[: t + 1]))
    n1 = hist.total - n0
    if n0 == 0 or n1 == 0:
        return 0.0
    idx = np.arange(256, dtype=np.int64)
    s0 = int(np.sum(idx[: t + 1] * counts[: t + 1]))
    s1 = int(np.sum(idx * counts)) - s0
    omega0 = n0 / hist.total
    omega1 = n1 / hist.total
    diff = s0 / n0 - s1 / n1
    return omega0 * omega1 * (diff * diff)


def variance_table(hist: Histogram) -> np.ndarray:
    """All 256 between-class variances, indexed by threshold."""
    return np.array([between_class_variance(hist, t) for t in range(256)])


def brute_force_otsu(hist: Histogram) -> tuple:
    """Exhaustive search over t = 0..255; ties pick the smallest t."""
    table = variance_table(hist)
    best_t = 0
    best_v = table[0]
    for t in range(1, 256):
        if table[t] > best_v:
            best_t = t
            best_v = table[t]
    return best_t, float(best_v)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


class ThresholdResult(NamedTuple):
    """Threshold found by the optimizer with its achieved variance."""

    threshold: int
    variance: float
    run: RunResult


def apo_threshold(
    img: GrayImage,
    cfg: Optional[ApoConfig] = None,
    ps: int = 100,
    iterations: int = 50,
    seed: int = 0,
    mode: Optional[EngineMode] = None,
    backend: Optional[str] = None,
) -> ThresholdResult:
    """Search for the maximum-variance threshold with the optimizer.

    The engine minimizes the negated variance of the 1-D position over
    [0, 255]; the position is rounded half-up at evaluation time through
    a precomputed 256-entry table, so the search space collapses onto the
    same integers the oracle enumerates. The returned variance is exact
    for the returned threshold. When ``cfg`` is given, its dimension and
    bounds are overridden to the 1-D box; ``ps``/``iterations``/``seed``
    only apply when it is not.
    """
    table = variance_table(histogram(img))
    objective = table_objective("negated_between_class_variance", -table)
    box = Bounds(0.0, 255.0, 1)
    if cfg is None:
        cfg = ApoConfig(ps=ps, dim=1, bounds=box, max_iterations=iterations, seed=seed)
    else:
        cfg = replace(cfg, dim=1, bounds=box)
    result = run(cfg, objective, mode=mode, backend=backend)
    t = round_half_up(float(result.best_position[0]))
    t = min(max(t, 0), 255)
    return ThresholdResult(t, -result.best_fitness, result)


def apply_threshold(img: GrayImage, t: int) -> GrayImage:
    """Binarize: intensities <= t become 0, the rest 255."""
    if not 0 <= t <= 255:
        raise ValueError(f"t must be in [0, 255], got {t}")
    return GrayImage(np.where(img.pixels > t, 255, 0).astype(np.uint8))
