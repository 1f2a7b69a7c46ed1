"""Detection orchestration: text prompts, exemplar prompts, and their union.

Both detectors live behind backend interfaces; this module maps their free
text labels into the vocabulary, applies score floors, and joins the two
proposal streams with a class-aware greedy overlap dedup. Conflicting
class labels on overlapping boxes are deliberately kept: the consistency
correction stage arbitrates those.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .backend.base import Exemplar, TextDetector, VisualDetector
from .core import Box, Raster, Vocabulary, box_iou

logger = logging.getLogger(__name__)

SOURCE_TEXT = "text"
SOURCE_VISUAL = "visual"

DEFAULT_TEXT_FLOOR = 0.35
DEFAULT_VISUAL_FLOOR = 0.4
DEFAULT_DEDUP_IOU = 0.7


@dataclass(frozen=True)
class DetectionProposal:
    """A detected box with its current and original class assignment."""

    box: Box
    class_id: int
    score: float
    source: str
    initial_class_id: int

    def __post_init__(self):
        if self.source not in (SOURCE_TEXT, SOURCE_VISUAL):
            raise ValueError(f"source must be 'text' or 'visual', got {self.source!r}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")
        if self.class_id < 0 or self.initial_class_id < 0:
            raise ValueError("class ids must be non-negative")

    @property
    def corrected(self) -> bool:
        return self.class_id != self.initial_class_id

    def with_class(self, class_id: int) -> "DetectionProposal":
        return replace(self, class_id=class_id)


def _new_proposal(box: Box, class_id: int, score: float, source: str) -> DetectionProposal:
    return DetectionProposal(
        box=box, class_id=class_id, score=score, source=source, initial_class_id=class_id
    )


@dataclass(frozen=True)
class ExemplarRef:
    """Library entry pointing at an exemplar region on a reference image."""

    class_name: str
    image_path: str
    box: Box


class ExemplarLibrary:
    """Per-class visual prompts, persisted as a JSON list of
    ``{class, image_path, box: [x, y, w, h]}`` entries."""

    def __init__(self, entries: Sequence[ExemplarRef] = ()):
        self.entries = list(entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def class_names(self) -> list[str]:
        seen: list[str] = []
        for entry in self.entries:
            if entry.class_name not in seen:
                seen.append(entry.class_name)
        return seen

    @classmethod
    def load(cls, path) -> "ExemplarLibrary":
        items = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = [
            ExemplarRef(
                class_name=str(item["class"]),
                image_path=str(item["image_path"]),
                box=Box.from_list(item["box"]),
            )
            for item in items
        ]
        return cls(entries)

    def save(self, path) -> None:
        items = [
            {"class": e.class_name, "image_path": e.image_path, "box": e.box.to_list()}
            for e in self.entries
        ]
        Path(path).write_text(json.dumps(items, indent=2), encoding="utf-8")

    def resolve(self, base_dir=None) -> list[Exemplar]:
        """Load the referenced images (cached per path) into exemplars."""
        cache: dict[str, Raster] = {}
        out = []
        for entry in self.entries:
            path = entry.image_path
            if base_dir is not None and not Path(path).is_absolute():
                path = str(Path(base_dir) / path)
            if path not in cache:
                cache[path] = Raster.load_png(path)
            out.append(Exemplar(entry.class_name, entry.box, cache[path]))
        return out


def detect_text(
    fused: Raster,
    vocab: Vocabulary,
    backend: TextDetector,
    score_floor: float = DEFAULT_TEXT_FLOOR,
) -> list[DetectionProposal]:
    """Run the text-prompt detector over the vocabulary and map its labels
    back to class indices (case-insensitive exact match; misses are dropped
    and counted in a warning)."""
    raw = backend.detect_text(fused, vocab.classes)
    proposals: list[DetectionProposal] = []
    dropped = 0
    for det in raw:
        class_id = vocab.index_of(det.label)
        if class_id is None:
            dropped += 1
            continue
        if det.score < score_floor:
            continue
        proposals.append(_new_proposal(det.box, class_id, float(det.score), SOURCE_TEXT))
    if dropped:
        logger.warning(
            "detect_text: dropped %d detection(s) labeled outside the vocabulary", dropped
        )
    return proposals


def detect_visual(
    fused: Raster,
    vocab: Vocabulary,
    exemplars: Sequence[Exemplar],
    backend: VisualDetector,
    score_floor: float = DEFAULT_VISUAL_FLOOR,
) -> list[DetectionProposal]:
    """Run the exemplar-prompt detector for every class that has exemplars."""
    if not exemplars:
        return []
    raw = backend.detect_visual(fused, exemplars)
    proposals: list[DetectionProposal] = []
    dropped = 0
    for det in raw:
        class_id = vocab.index_of(det.label)
        if class_id is None:
            dropped += 1
            continue
        if det.score < score_floor:
            continue
        proposals.append(_new_proposal(det.box, class_id, float(det.score), SOURCE_VISUAL))
    if dropped:
        logger.warning(
            "detect_visual: dropped %d detection(s) labeled outside the vocabulary",
            dropped,
        )
    return proposals


def union_proposals(
    text: Sequence[DetectionProposal],
    visual: Sequence[DetectionProposal],
    dedup_iou: float = DEFAULT_DEDUP_IOU,
) -> list[DetectionProposal]:
    """Join the two proposal sets, greedily suppressing same-class
    near-duplicates (overlap >= dedup_iou) in favor of the higher score.
    Cross-class overlaps always survive; values above 1 disable the dedup.
    Output is score-descending."""
    if dedup_iou < 0.0:
        raise ValueError(f"dedup_iou must be non-negative, got {dedup_iou}")
    merged = list(text) + list(visual)
    order = sorted(range(len(merged)), key=lambda i: (-merged[i].score, i))
    kept: list[DetectionProposal] = []
    for i in order:
        candidate = merged[i]
        duplicate = any(
            kept_p.class_id == candidate.class_id
            and box_iou(kept_p.box, candidate.box) >= dedup_iou
            for kept_p in kept
        )
        if not duplicate:
            kept.append(candidate)
    return kept
