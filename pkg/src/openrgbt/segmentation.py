"""Instance masks from box prompts, composited into a semantic label map.

The segmenter backend turns each proposal box into a binary mask plus an
optional caption. Compositing paints masks in ascending score order so the
most confident instance owns contested pixels; score ties go to the
earlier proposal. Pixels covered by no mask stay at the unlabeled
sentinel 255.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .backend.base import Segmenter
from .core import VOID_LABEL, Raster, RleMask, Vocabulary, rle_decode, save_label_png
from .prompting import DetectionProposal

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InstanceResult:
    """One proposal with its mask and caption; ``order`` is the proposal's
    position in the per-image stream and breaks score ties."""

    proposal: DetectionProposal
    mask: RleMask
    caption: str = ""
    order: int = 0


@dataclass(frozen=True)
class SemanticMap:
    """Per-pixel class indices (255 = unlabeled) plus the instances that
    produced them."""

    labels: np.ndarray
    instances: tuple[InstanceResult, ...]

    def __post_init__(self):
        arr = np.ascontiguousarray(self.labels, dtype=np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def save_label_png(self, path) -> None:
        save_label_png(path, self.labels)

    def instances_json(self, vocab: Vocabulary) -> list[dict]:
        out = []
        for inst in self.instances:
            p = inst.proposal
            out.append(
                {
                    "box": p.box.to_list(),
                    "class": vocab.classes[p.class_id],
                    "class_id": p.class_id,
                    "score": p.score,
                    "source": p.source,
                    "corrected": p.corrected,
                    "initial_class": vocab.classes[p.initial_class_id],
                    "rle": inst.mask.to_json(),
                    "caption": inst.caption,
                }
            )
        return out

    def save_instances_json(self, path, vocab: Vocabulary) -> None:
        Path(path).write_text(
            json.dumps(self.instances_json(vocab), indent=2), encoding="utf-8"
        )


def segment_proposals(
    fused: Raster,
    proposals: Sequence[DetectionProposal],
    backend: Segmenter,
) -> list[InstanceResult]:
    """One mask (+caption) per proposal, order preserved; empty masks are
    allowed and counted."""
    if not proposals:
        return []
    results = backend.segment(fused, [p.box for p in proposals])
    if len(results) != len(proposals):
        raise ValueError(
            f"segmenter returned {len(results)} masks for {len(proposals)} proposals"
        )
    out: list[InstanceResult] = []
    empty = 0
    for i, (proposal, seg) in enumerate(zip(proposals, results)):
        if (seg.mask.width, seg.mask.height) != (fused.width, fused.height):
            raise ValueError(
                f"mask {seg.mask.width}x{seg.mask.height} does not match image "
                f"{fused.width}x{fused.height}"
            )
        if seg.mask.foreground == 0:
            empty += 1
        out.append(InstanceResult(proposal=proposal, mask=seg.mask, caption=seg.caption, order=i))
    if empty:
        logger.info("segment_proposals: %d of %d masks are empty", empty, len(proposals))
    return out


def composite(
    instances: Sequence[InstanceResult], width: int, height: int
) -> SemanticMap:
    """Fold instance masks into one label raster. Higher score wins contested
    pixels; ties go to the lower ``order``. Deterministic and invariant to
    the order of the input list."""
    labels = np.full((height, width), VOID_LABEL, dtype=np.uint8)
    # Paint lowest score first so later (stronger) instances overwrite.
    for inst in sorted(instances, key=lambda r: (r.proposal.score, -r.order)):
        mask = inst.mask
        if (mask.width, mask.height) != (width, height):
            raise ValueError(
                f"mask {mask.width}x{mask.height} does not match target "
                f"{width}x{height}"
            )
        labels[rle_decode(mask) != 0] = inst.proposal.class_id
    return SemanticMap(labels=labels, instances=tuple(instances))
