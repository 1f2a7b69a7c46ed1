"""Capability interfaces the pipeline depends on, as structural protocols."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from ..core import Box, Raster, RleMask


@dataclass(frozen=True)
class RawDetection:
    """Backend detection before vocabulary mapping: label is free text."""

    box: Box
    label: str
    score: float


@dataclass(frozen=True)
class Exemplar:
    """One visual prompt: a box on a reference image defining a category."""

    class_name: str
    box: Box
    image: Raster | None = None


@dataclass(frozen=True)
class SegmentResult:
    mask: RleMask
    caption: str = ""


@runtime_checkable
class TextDetector(Protocol):
    def detect_text(self, image: Raster, class_names: Sequence[str]) -> list[RawDetection]: ...


@runtime_checkable
class VisualDetector(Protocol):
    def detect_visual(self, image: Raster, exemplars: Sequence[Exemplar]) -> list[RawDetection]: ...


@runtime_checkable
class Embedder(Protocol):
    def embed_texts(self, texts: Sequence[str]) -> np.ndarray: ...

    def embed_boxes(self, image: Raster, boxes: Sequence[Box]) -> np.ndarray: ...


@runtime_checkable
class Segmenter(Protocol):
    def segment(self, image: Raster, boxes: Sequence[Box]) -> list[SegmentResult]: ...
