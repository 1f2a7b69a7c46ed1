"""Fixed sine-cosine positional embedding of normalized boxes.

Each of the four box coordinates (x, y, w, h) is expanded into ``dim // 4``
features: interleaved sin/cos pairs over geometrically spaced frequencies
(base 10000), DETR-style with a 2*pi coordinate scale. An optional seeded
random projection stands in for a learned linear layer so downstream
consumers see a fixed-dimension, deterministic embedding.
"""

from __future__ import annotations

import math

import numpy as np

from ..core import Box

FREQUENCY_BASE = 10000.0


def sine_cosine_pe(
    box: Box, dim: int, project: bool = False, seed: int = 0
) -> np.ndarray:
    """Embed a box into a length-``dim`` vector; ``dim`` must be divisible
    by 8 so every coordinate gets whole sin/cos pairs."""
    if dim <= 0 or dim % 8 != 0:
        raise ValueError(f"embedding dim must be a positive multiple of 8, got {dim}")
    per_coord = dim // 4
    idx = np.arange(per_coord)
    denom = FREQUENCY_BASE ** (2.0 * (idx // 2) / per_coord)
    coords = np.array([box.x, box.y, box.w, box.h], dtype=np.float64)
    angles = (2.0 * math.pi * coords)[:, None] / denom[None, :]
    feats = np.empty((4, per_coord), dtype=np.float64)
    feats[:, 0::2] = np.sin(angles[:, 0::2])
    feats[:, 1::2] = np.cos(angles[:, 1::2])
    raw = feats.reshape(-1)
    if not project:
        return raw
    rng = np.random.default_rng(seed)
    projection = rng.standard_normal((dim, dim)) / math.sqrt(dim)
    return projection @ raw
