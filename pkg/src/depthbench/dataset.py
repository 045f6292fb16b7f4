"""Loading and validation of RGB / 16-bit depth sample pairs and dataset manifests.

Depth rasters are 16-bit grayscale PNGs; a raw value of 0 marks a pixel where
the stereo sensor produced no measurement. Raw values convert to meters through
a per-file unit scale (default: millimeters, i.e. 0.001 m per unit).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

DEFAULT_UNIT_SCALE = 0.001  # meters per raw unit (millimeter convention)
VGA_SIZE = (640, 480)  # (width, height)

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_SPLITS = ("train", "val", "test")


class NotPngError(ValueError):
    """File is not a PNG image."""


class WrongBitDepthError(ValueError):
    """PNG bit depth does not match the expected format."""


class WrongChannelCountError(ValueError):
    """PNG channel layout does not match the expected format."""


class ManifestParseError(ValueError):
    """Manifest line could not be parsed; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class DuplicateEntryError(ValueError):
    """Manifest lists the same RGB path more than once."""


@dataclass(frozen=True)
class DepthMap:
    """16-bit depth raster; values[y, x] == 0 means the pixel is invalid."""

    values: np.ndarray  # (height, width) uint16
    unit_scale: float = DEFAULT_UNIT_SCALE

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.dtype != np.uint16:
            raise ValueError("depth values must be a 2-d uint16 array")
        if self.values.size == 0:
            raise ValueError("depth map must be non-empty")
        if not self.unit_scale > 0:
            raise ValueError("unit_scale must be positive")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class RgbImage:
    """8-bit 3-channel image."""

    values: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[2] != 3 or self.values.dtype != np.uint8:
            raise ValueError("rgb values must be an (h, w, 3) uint8 array")
        if self.values.size == 0:
            raise ValueError("rgb image must be non-empty")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class MetricDepthField:
    """Depth in meters plus a validity mask; depth_m > 0 wherever mask is set."""

    depth_m: np.ndarray  # (height, width) float64
    mask: np.ndarray  # (height, width) bool

    def __post_init__(self):
        if self.depth_m.shape != self.mask.shape or self.depth_m.ndim != 2:
            raise ValueError("depth_m and mask must be 2-d arrays of equal shape")
        if np.any(self.depth_m[self.mask] <= 0):
            raise ValueError("masked-valid pixels must have positive depth")

    @property
    def width(self) -> int:
        return self.depth_m.shape[1]

    @property
    def height(self) -> int:
        return self.depth_m.shape[0]


@dataclass(frozen=True)
class ManifestEntry:
    rgb_path: str
    depth_path: str
    split: str
    unit_scale: float = DEFAULT_UNIT_SCALE


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class ValidationReport:
    """Findings from checking an RGB/depth pair; errors block, warnings do not."""

    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    invalid_fraction: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.errors


def _read_ihdr(path: Path) -> tuple[int, int, int, int]:
    """Return (width, height, bit_depth, color_type) from the PNG header."""
    with open(path, "rb") as fh:
        head = fh.read(8 + 8 + 13)
    if len(head) < 29 or head[:8] != _PNG_SIGNATURE:
        raise NotPngError(f"{path}: not a PNG file")
    if head[12:16] != b"IHDR":
        raise NotPngError(f"{path}: malformed PNG (missing IHDR)")
    width, height, bit_depth, color_type = struct.unpack(">IIBB", head[16:26])
    return width, height, bit_depth, color_type


def load_depth_png(path, unit_scale: float = DEFAULT_UNIT_SCALE) -> DepthMap:
    """Decode a single-channel 16-bit grayscale PNG, preserving raw values bit-exactly.

    Raises FileNotFoundError, NotPngError, WrongBitDepthError (e.g. 8-bit
    input) or WrongChannelCountError (RGB/RGBA/palette input).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    _, _, bit_depth, color_type = _read_ihdr(path)
    if color_type != 0:
        raise WrongChannelCountError(
            f"{path}: expected single-channel grayscale, got PNG color type {color_type}"
        )
    if bit_depth != 16:
        raise WrongBitDepthError(f"{path}: expected 16-bit depth PNG, got {bit_depth}-bit")
    with Image.open(path) as img:
        raw = np.asarray(img)
    return DepthMap(values=raw.astype(np.uint16, copy=False), unit_scale=unit_scale)


def save_depth_png(path, depth: DepthMap) -> None:
    """Encode a DepthMap as a 16-bit grayscale PNG (lossless)."""
    Image.fromarray(depth.values.astype(np.uint16, copy=False)).save(Path(path), format="PNG")


def load_rgb_png(path) -> RgbImage:
    """Decode an 8-bit 3-channel PNG, preserving pixel values bit-exactly.

    Raises FileNotFoundError, NotPngError or WrongChannelCountError
    (grayscale or alpha input).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    _, _, bit_depth, color_type = _read_ihdr(path)
    if color_type != 2:
        raise WrongChannelCountError(
            f"{path}: expected 3-channel RGB, got PNG color type {color_type}"
        )
    if bit_depth != 8:
        raise WrongBitDepthError(f"{path}: expected 8-bit RGB PNG, got {bit_depth}-bit")
    with Image.open(path) as img:
        values = np.asarray(img)
    return RgbImage(values=values.astype(np.uint8, copy=False))


def save_rgb_png(path, image: RgbImage) -> None:
    Image.fromarray(image.values).save(Path(path), format="PNG")


def to_metric_depth(depth: DepthMap) -> MetricDepthField:
    """Convert raw depth units to meters; mask marks pixels with raw value > 0."""
    mask = depth.values > 0
    depth_m = depth.values.astype(np.float64) * depth.unit_scale
    return MetricDepthField(depth_m=depth_m, mask=mask)


def validate_pair(rgb: RgbImage, depth: DepthMap) -> ValidationReport:
    """Check an RGB/depth pair for dimension agreement and working resolution.

    A dimension mismatch is an error; a non-VGA resolution only a warning so
    the tooling stays usable on other datasets. The report always carries the
    fraction of invalid (zero) depth pixels.
    """
    report = ValidationReport()
    if (rgb.width, rgb.height) != (depth.width, depth.height):
        report.errors.append(
            f"DimensionMismatch: rgb {rgb.width}x{rgb.height} vs depth {depth.width}x{depth.height}"
        )
    if (depth.width, depth.height) != VGA_SIZE:
        report.warnings.append(f"NonVgaResolution: {depth.width}x{depth.height}")
    report.invalid_fraction = float(np.count_nonzero(depth.values == 0)) / depth.values.size
    return report


def load_manifest(path) -> DatasetManifest:
    """Parse a line-delimited JSON manifest.

    Each line is an object with keys ``rgb``, ``depth``, ``split`` (one of
    train/val/test) and optional ``unit_scale`` in meters per raw unit.
    Duplicate rgb paths are rejected. An empty file is a valid empty manifest.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    entries: list[ManifestEntry] = []
    seen_rgb: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestParseError(line_number, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise ManifestParseError(line_number, "expected a JSON object")
            try:
                rgb = record["rgb"]
                depth = record["depth"]
                split = record["split"]
            except KeyError as exc:
                raise ManifestParseError(line_number, f"missing key {exc.args[0]!r}") from exc
            if not rgb or not depth:
                raise ManifestParseError(line_number, "rgb and depth paths must be non-empty")
            if split not in _SPLITS:
                raise ManifestParseError(
                    line_number, f"split must be one of {_SPLITS}, got {split!r}"
                )
            unit_scale = record.get("unit_scale", DEFAULT_UNIT_SCALE)
            if not isinstance(unit_scale, (int, float)) or not unit_scale > 0:
                raise ManifestParseError(line_number, "unit_scale must be a positive number")
            if rgb in seen_rgb:
                raise DuplicateEntryError(f"line {line_number}: duplicate rgb path {rgb!r}")
            seen_rgb.add(rgb)
            entries.append(
                ManifestEntry(
                    rgb_path=rgb, depth_path=depth, split=split, unit_scale=float(unit_scale)
                )
            )
    return DatasetManifest(entries=tuple(entries))
