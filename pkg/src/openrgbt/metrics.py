"""Confusion-matrix evaluation: per-class IoU/accuracy, mAcc, and mIoU.

Counts are kept as a (K, K+1) integer table: rows are ground-truth
classes, the first K columns are predicted classes, and the last column
collects unlabeled (255) predictions, which count against the ground-truth
class as misses without crediting any predicted class. Ground-truth pixels
equal to the ignore index never enter the table. Classes absent from the
ground truth are excluded from the means; per-class vectors carry NaN
there. Scores are percentages.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import kernels
from .core import VOID_LABEL, Vocabulary

logger = logging.getLogger(__name__)


class ConfusionMatrix:
    """Additive (K, K+1) count table; see the module docstring for layout."""

    __slots__ = ("counts", "ignore_index")

    def __init__(self, counts: np.ndarray, ignore_index: int | None = None):
        arr = np.asarray(counts, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[1] != arr.shape[0] + 1:
            raise ValueError(f"counts must have shape (K, K+1), got {arr.shape}")
        if arr.min() < 0:
            raise ValueError("counts must be non-negative")
        self.counts = arr
        self.ignore_index = ignore_index

    @classmethod
    def zeros(cls, n_classes: int, ignore_index: int | None = None) -> "ConfusionMatrix":
        return cls(np.zeros((n_classes, n_classes + 1), dtype=np.int64), ignore_index)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        """The K x K ground-truth x predicted block."""
        return self.counts[:, : self.n_classes]

    @property
    def void_predictions(self) -> np.ndarray:
        return self.counts[:, self.n_classes]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.n_classes != other.n_classes:
            raise ValueError("cannot add confusion matrices of different sizes")
        if self.ignore_index != other.ignore_index:
            raise ValueError("cannot add matrices with different ignore conventions")
        return ConfusionMatrix(self.counts + other.counts, self.ignore_index)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ConfusionMatrix)
            and self.ignore_index == other.ignore_index
            and bool(np.array_equal(self.counts, other.counts))
        )


def confusion(
    pred: np.ndarray,
    gt: np.ndarray,
    n_classes: int,
    ignore_index: int | None = None,
) -> ConfusionMatrix:
    """Tally one prediction/ground-truth pair into a count table."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    if n_classes < 1:
        raise ValueError("need at least one class")
    gt_flat = np.ascontiguousarray(gt.reshape(-1), dtype=np.int64)
    pred_flat = np.ascontiguousarray(pred.reshape(-1), dtype=np.int64)

    considered = gt_flat if ignore_index is None else gt_flat[gt_flat != ignore_index]
    if considered.size and (considered.min() < 0 or considered.max() >= n_classes):
        raise ValueError(
            f"ground-truth labels must lie in [0, {n_classes}) apart from the "
            f"ignore index {ignore_index!r}"
        )
    bad_pred = (pred_flat < 0) | ((pred_flat >= n_classes) & (pred_flat != VOID_LABEL))
    if ignore_index is not None:
        bad_pred &= gt_flat != ignore_index
    if bad_pred.any():
        raise ValueError(
            f"predicted labels must lie in [0, {n_classes}) or be the "
            f"unlabeled sentinel {VOID_LABEL}"
        )
    counts = kernels.confusion_tally(
        gt_flat, pred_flat, n_classes, -1 if ignore_index is None else ignore_index
    )
    return ConfusionMatrix(counts, ignore_index)


def _per_class(cm: ConfusionMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    tp = np.diag(cm.matrix).astype(np.float64)
    gt_total = cm.counts.sum(axis=1).astype(np.float64)
    fn = gt_total - tp
    fp = cm.matrix.sum(axis=0).astype(np.float64) - tp
    return tp, fp, fn, gt_total


def miou(cm: ConfusionMatrix) -> tuple[np.ndarray, float]:
    """Per-class IoU (percent, NaN where the class is absent from GT) and
    their mean over present classes."""
    tp, fp, fn, gt_total = _per_class(cm)
    present = gt_total > 0
    iou = np.full(cm.n_classes, np.nan)
    denom = tp + fp + fn
    np.divide(tp, denom, out=iou, where=present)
    iou *= 100.0
    mean = float(np.nanmean(iou)) if present.any() else float("nan")
    return iou, mean


def macc(cm: ConfusionMatrix) -> tuple[np.ndarray, float]:
    """Per-class accuracy (recall, percent, NaN where absent) and its mean."""
    tp, _, _, gt_total = _per_class(cm)
    present = gt_total > 0
    acc = np.full(cm.n_classes, np.nan)
    np.divide(tp, gt_total, out=acc, where=present)
    acc *= 100.0
    mean = float(np.nanmean(acc)) if present.any() else float("nan")
    return acc, mean


@dataclass
class EvalSample:
    pred: np.ndarray
    gt: np.ndarray
    condition: str | None = None


@dataclass
class EvalReport:
    """Aggregated scores for one run: overall plus per condition tag."""

    vocab: Vocabulary
    ignore_index: int | None
    overall: ConfusionMatrix
    conditions: dict[str, ConfusionMatrix] = field(default_factory=dict)
    n_samples: int = 0
    n_skipped: int = 0

    @property
    def no_evaluated_pixels(self) -> bool:
        return self.overall.total == 0

    def _section(self, cm: ConfusionMatrix) -> dict:
        iou, mean_iou = miou(cm)
        acc, mean_acc = macc(cm)

        def listify(values: np.ndarray) -> list:
            return [None if np.isnan(v) else float(v) for v in values]

        return {
            "mAcc": None if np.isnan(mean_acc) else float(mean_acc),
            "mIoU": None if np.isnan(mean_iou) else float(mean_iou),
            "per_class_acc": listify(acc),
            "per_class_iou": listify(iou),
            "evaluated_pixels": cm.total,
        }

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "classes": list(self.vocab.classes),
            "ignore_index": self.ignore_index,
            "samples": self.n_samples,
            "skipped": self.n_skipped,
            "no_evaluated_pixels": self.no_evaluated_pixels,
            "overall": self._section(self.overall),
            "conditions": {
                tag: self._section(cm) for tag, cm in sorted(self.conditions.items())
            },
        }

    def to_text(self) -> str:
        """Aligned human-readable table."""
        lines = []
        name_width = max([len(c) for c in self.vocab.classes] + [len("class")])

        def fmt(value) -> str:
            return "   -" if value is None else f"{value:7.2f}"

        def section(title: str, cm: ConfusionMatrix):
            data = self._section(cm)
            lines.append(title)
            lines.append(f"  {'class'.ljust(name_width)}     Acc     IoU")
            for i, name in enumerate(self.vocab.classes):
                lines.append(
                    f"  {name.ljust(name_width)} {fmt(data['per_class_acc'][i])} "
                    f"{fmt(data['per_class_iou'][i])}"
                )
            lines.append(
                f"  {'mean'.ljust(name_width)} {fmt(data['mAcc'])} {fmt(data['mIoU'])}"
            )

        section(f"overall ({self.n_samples} samples, {self.n_skipped} skipped)", self.overall)
        if self.no_evaluated_pixels:
            lines.append("  warning: no evaluated pixels")
        for tag, cm in sorted(self.conditions.items()):
            lines.append("")
            section(f"condition: {tag}", cm)
        return "\n".join(lines) + "\n"

    def save_json(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), indent=2, sort_keys=True), encoding="utf-8"
        )


def evaluate_run(
    samples: Iterable[EvalSample] | Iterator[EvalSample],
    vocab: Vocabulary,
    ignore_index: int | None = None,
) -> EvalReport:
    """Accumulate one confusion matrix overall and one per condition tag.
    Samples whose shapes disagree are skipped and counted."""
    overall = ConfusionMatrix.zeros(vocab.size, ignore_index)
    conditions: dict[str, ConfusionMatrix] = {}
    n_samples = 0
    n_skipped = 0
    for sample in samples:
        if np.asarray(sample.pred).shape != np.asarray(sample.gt).shape:
            logger.warning(
                "skipping sample with mismatched shapes %s vs %s",
                np.asarray(sample.pred).shape,
                np.asarray(sample.gt).shape,
            )
            n_skipped += 1
            continue
        cm = confusion(sample.pred, sample.gt, vocab.size, ignore_index)
        overall = overall + cm
        if sample.condition:
            existing = conditions.get(sample.condition)
            conditions[sample.condition] = cm if existing is None else existing + cm
        n_samples += 1
    return EvalReport(
        vocab=vocab,
        ignore_index=ignore_index,
        overall=overall,
        conditions=conditions,
        n_samples=n_samples,
        n_skipped=n_skipped,
    )
