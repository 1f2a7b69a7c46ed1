"""Geometry, raster, and binary-mask primitives shared by every stage.

All values are immutable after construction and safe to share across
threads. Boxes are stored in unit-normalized image coordinates with a
top-left origin; conversion to pixels floors the origin and rounds the
extents half-up, then clamps to the raster bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels

VOID_LABEL = 255

_EPS = 1e-9


@dataclass(frozen=True)
class Box:
    """Normalized box (x, y, w, h), top-left origin, all in [0, 1]."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise ValueError(f"box has non-finite coordinates: {self}")
        if self.x < -_EPS or self.y < -_EPS:
            raise ValueError(f"box origin must be non-negative: {self}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box extents must be positive: {self}")
        if self.x + self.w > 1.0 + _EPS or self.y + self.h > 1.0 + _EPS:
            raise ValueError(f"box exceeds the unit square: {self}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_list(cls, values) -> "Box":
        x, y, w, h = (float(v) for v in values)
        return cls(x, y, w, h)

    def to_pixels(self, width: int, height: int) -> tuple[int, int, int, int]:
        """Return (x0, y0, w_px, h_px), at least 1x1, clamped to the raster."""
        x0 = min(int(math.floor(self.x * width)), width - 1)
        y0 = min(int(math.floor(self.y * height)), height - 1)
        w_px = max(1, int(math.floor(self.w * width + 0.5)))
        h_px = max(1, int(math.floor(self.h * height + 0.5)))
        w_px = min(w_px, width - x0)
        h_px = min(h_px, height - y0)
        return x0, y0, w_px, h_px


def box_iou(a: Box, b: Box) -> float:
    """Intersection over union of two normalized boxes, in [0, 1]."""
    if a == b:
        # Exact identity; the subtractions below can drift by one ulp.
        return 1.0
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return min(1.0, inter / (a.area + b.area - inter))


@dataclass(frozen=True)
class RleMask:
    """Run-length-coded binary mask, row-major, starting with a background
    run (possibly zero)."""

    width: int
    height: int
    runs: tuple[int, ...]

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("mask dimensions must be positive")
        if any(r < 0 for r in self.runs):
            raise ValueError("run lengths must be non-negative")
        total = sum(self.runs)
        if total != self.width * self.height:
            raise ValueError(
                f"run lengths sum to {total}, expected {self.width * self.height}"
            )

    @property
    def foreground(self) -> int:
        return sum(self.runs[1::2])

    def to_json(self) -> dict:
        return {"width": self.width, "height": self.height, "runs": list(self.runs)}

    @classmethod
    def from_json(cls, obj: dict) -> "RleMask":
        return cls(int(obj["width"]), int(obj["height"]), tuple(int(r) for r in obj["runs"]))


def rle_encode(bitmap: np.ndarray) -> RleMask:
    """Encode a binary (H, W) array; any nonzero pixel is foreground."""
    if bitmap.ndim != 2:
        raise ValueError("bitmap must be 2-D")
    h, w = bitmap.shape
    flat = np.ascontiguousarray(bitmap.reshape(-1) != 0).view(np.uint8)
    runs = kernels.rle_encode(flat)
    return RleMask(width=w, height=h, runs=tuple(int(r) for r in runs))


def rle_decode(mask: RleMask) -> np.ndarray:
    """Decode to a uint8 (H, W) array of zeros and ones."""
    runs = np.asarray(mask.runs, dtype=np.int64)
    flat = kernels.rle_decode(runs, mask.width * mask.height)
    return flat.reshape(mask.height, mask.width)


class Raster:
    """Immutable 8-bit image, 1 or 3 channels, row-major."""

    __slots__ = ("pixels",)

    def __init__(self, pixels: np.ndarray):
        arr = np.ascontiguousarray(pixels, dtype=np.uint8)
        if arr.ndim == 2:
            pass
        elif arr.ndim == 3 and arr.shape[2] == 3:
            pass
        else:
            raise ValueError(f"raster must be (H, W) or (H, W, 3), got {arr.shape}")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValueError("raster dimensions must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Raster is immutable")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Raster)
            and self.pixels.shape == other.pixels.shape
            and bool(np.array_equal(self.pixels, other.pixels))
        )

    def __repr__(self) -> str:
        return f"Raster({self.width}x{self.height}x{self.channels})"

    @classmethod
    def load_png(cls, path) -> "Raster":
        with Image.open(path) as img:
            if img.mode == "L":
                return cls(np.asarray(img))
            if img.mode == "P":
                # Palette label maps: pixel value is the palette index.
                return cls(np.asarray(img))
            return cls(np.asarray(img.convert("RGB")))

    def save_png(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        mode = "L" if self.channels == 1 else "RGB"
        Image.fromarray(np.asarray(self.pixels), mode=mode).save(path, format="PNG")


def crop(raster: Raster, box: Box) -> Raster:
    """Cut the box region out of the raster; degenerate crops become 1x1."""
    x0, y0, w_px, h_px = box.to_pixels(raster.width, raster.height)
    return Raster(raster.pixels[y0 : y0 + h_px, x0 : x0 + w_px])


@dataclass(frozen=True)
class Vocabulary:
    """Ordered class names; index order is the label-raster convention."""

    classes: tuple[str, ...]
    background_index: int | None = None

    def __post_init__(self):
        if len(self.classes) < 1:
            raise ValueError("vocabulary needs at least one class")
        if any(not c for c in self.classes):
            raise ValueError("class names must be non-empty")
        normalized = [c.strip().lower() for c in self.classes]
        if len(set(normalized)) != len(normalized):
            raise ValueError("class names must be unique")
        if len(self.classes) >= VOID_LABEL:
            raise ValueError(f"at most {VOID_LABEL - 1} classes are supported")
        object.__setattr__(self, "_lookup", {n: i for i, n in enumerate(normalized)})

    @property
    def size(self) -> int:
        return len(self.classes)

    def index_of(self, name: str) -> int | None:
        """Case-insensitive exact match; None when the name is unknown."""
        return self._lookup.get(name.strip().lower())

    @classmethod
    def from_list(cls, names, background_index: int | None = None) -> "Vocabulary":
        return cls(tuple(str(n) for n in names), background_index)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        """Read one class name per line, skipping blanks and '#' comments."""
        names = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                names.append(line)
        return cls.from_list(names)


def load_label_png(path) -> np.ndarray:
    """Read a single-channel label map whose pixel value is the class index."""
    raster = Raster.load_png(path)
    if raster.channels != 1:
        raise ValueError(f"label map must be single-channel: {path}")
    return np.asarray(raster.pixels)


def save_label_png(path, labels: np.ndarray) -> None:
    Raster(labels.astype(np.uint8)).save_png(path)
