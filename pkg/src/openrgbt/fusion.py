"""Pixel-wise adaptive fusion of a registered visible/thermal pair.

The fused image is an explicit convex combination ``W*rgb + (1-W)*thermal``
with the thermal channel replicated to three channels. The weight map can
come from the built-in contrast heuristic (:func:`reference_weights`), from
a pre-computed PNG, or from any external producer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import Raster

# Rec. 601 luma coefficients.
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class ImagePair:
    """Registered visible (3-channel) and thermal (1-channel) rasters."""

    rgb: Raster
    thermal: Raster
    id: str = ""

    def __post_init__(self):
        if self.rgb.channels != 3:
            raise ValueError("rgb raster must have 3 channels")
        if self.thermal.channels != 1:
            raise ValueError("thermal raster must have 1 channel")
        if (self.rgb.width, self.rgb.height) != (self.thermal.width, self.thermal.height):
            raise ValueError(
                f"modality dimensions differ: rgb {self.rgb.width}x{self.rgb.height} "
                f"vs thermal {self.thermal.width}x{self.thermal.height}"
            )

    @property
    def width(self) -> int:
        return self.rgb.width

    @property
    def height(self) -> int:
        return self.rgb.height


class WeightMap:
    """Per-pixel weight on the visible modality, each value in [0, 1]."""

    __slots__ = ("weights",)

    def __init__(self, weights: np.ndarray):
        arr = np.ascontiguousarray(weights, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("weight map must be 2-D")
        if arr.size == 0:
            raise ValueError("weight map must be non-empty")
        if float(arr.min()) < 0.0 or float(arr.max()) > 1.0:
            raise ValueError("weights must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "weights", arr)

    def __setattr__(self, name, value):
        raise AttributeError("WeightMap is immutable")

    @property
    def height(self) -> int:
        return self.weights.shape[0]

    @property
    def width(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def constant(cls, value: float, width: int, height: int) -> "WeightMap":
        return cls(np.full((height, width), float(value)))

    @classmethod
    def load_png(cls, path) -> "WeightMap":
        """Read an 8-bit single-channel PNG, mapping 0..255 to 0..1."""
        raster = Raster.load_png(path)
        if raster.channels != 1:
            raise ValueError(f"weight map PNG must be single-channel: {path}")
        return cls(np.asarray(raster.pixels, dtype=np.float64) / 255.0)

    def save_png(self, path) -> None:
        Raster(np.floor(self.weights * 255.0 + 0.5).astype(np.uint8)).save_png(path)


def fuse(pair: ImagePair, weights: WeightMap) -> Raster:
    """Blend the pair into a 3-channel raster, rounding half-up to 8 bits."""
    if (weights.width, weights.height) != (pair.width, pair.height):
        raise ValueError(
            f"weight map {weights.width}x{weights.height} does not match "
            f"pair {pair.width}x{pair.height}"
        )
    fused = kernels.fuse_rgbt(
        np.asarray(pair.rgb.pixels),
        np.asarray(pair.thermal.pixels),
        weights.weights,
    )
    return Raster(fused)


def luminance(rgb: Raster) -> np.ndarray:
    """Rec. 601 luma of a 3-channel raster as float64 in [0, 255]."""
    if rgb.channels != 3:
        raise ValueError("luminance expects a 3-channel raster")
    return np.asarray(rgb.pixels, dtype=np.float64) @ _LUMA


def local_contrast_term(pair: ImagePair, window: int = 9) -> np.ndarray:
    """Visible-modality share of local contrast: var_rgb / (var_rgb + var_t).

    Windows are clipped at the borders; pixels where both variances vanish
    get the symmetric value 0.5.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    radius = window // 2
    var_rgb = kernels.window_variance(luminance(pair.rgb), radius)
    var_t = kernels.window_variance(
        np.asarray(pair.thermal.pixels, dtype=np.float64), radius
    )
    total = var_rgb + var_t
    out = np.full(total.shape, 0.5)
    np.divide(var_rgb, total, out=out, where=total > 0)
    return np.clip(out, 0.0, 1.0)


def global_brightness_term(rgb: Raster) -> float:
    """Brightness adequacy of the visible image: 1 at mid-gray mean, 0 at
    a fully black or fully white mean."""
    mean = float(luminance(rgb).mean())
    return 1.0 - abs(mean - 127.5) / 127.5


def reference_weights(pair: ImagePair, window: int = 9) -> WeightMap:
    """Heuristic weight map: equal blend of the local contrast share and the
    global brightness adequacy of the visible image."""
    local = local_contrast_term(pair, window)
    glob = global_brightness_term(pair.rgb)
    return WeightMap(0.5 * local + 0.5 * glob)


def load_external_fused(path) -> Raster:
    """Ingest a fused image produced elsewhere; it is forwarded unchanged."""
    raster = Raster.load_png(path)
    if raster.channels != 3:
        raise ValueError(f"wrong channel count: expected 3-channel PNG at {path}")
    return raster
