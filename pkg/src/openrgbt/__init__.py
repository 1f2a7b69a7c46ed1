"""Zero-shot open-vocabulary semantic segmentation for registered
visible/thermal image pairs.

The engine fuses each pair into a single image, gathers detection
proposals from text prompts and visual exemplar prompts, corrects
proposal labels through vision-language similarity, masks each proposal,
composites the masks into a per-pixel semantic map, and scores the result
with mean accuracy and mean IoU. Every foundation-model capability sits
behind a small wire protocol with deterministic in-process mocks.
"""

__version__ = "0.1.0"

from .core import Box, Raster, RleMask, Vocabulary, box_iou, crop, rle_decode, rle_encode
from .fusion import ImagePair, WeightMap, fuse, reference_weights

__all__ = [
    "Box",
    "ImagePair",
    "Raster",
    "RleMask",
    "Vocabulary",
    "WeightMap",
    "box_iou",
    "crop",
    "fuse",
    "reference_weights",
    "rle_decode",
    "rle_encode",
    "__version__",
]
