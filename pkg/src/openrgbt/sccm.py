"""Semantic-consistency correction of proposal labels.

Every proposal crop is scored against every vocabulary class with a
vision-language embedder. The confidence of proposal n for class k is

    F[n, k] = exp(s_nk) / (1 + sum_j exp(s_nj)),    s_nk = t * <v_n, e_k>

computed in a shifted, overflow-free form. A proposal is relabeled to the
highest-confidence class only when that class differs from the detector's
initial label, wins by at least ``th1``, and clears the absolute floor
``th2``; otherwise the detector's label stands.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .backend.base import Embedder
from .core import Raster
from .prompting import DetectionProposal

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SccmConfig:
    """Correction thresholds and similarity scaling.

    The threshold defaults are operating points, not calibrated values;
    the ``calibrate`` command sweeps them against a labeled split.
    """

    th1: float = 0.2
    th2: float = 0.5
    temperature: float = 10.0
    normalize_embeddings: bool = True
    text_template: str | None = None

    def __post_init__(self):
        if self.th1 < 0:
            raise ValueError("th1 must be non-negative")
        if not 0.0 < self.th2 < 1.0:
            raise ValueError("th2 must lie in (0, 1)")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    def prompts(self, class_names: Sequence[str]) -> list[str]:
        if self.text_template is None:
            return list(class_names)
        return [self.text_template.format(name) for name in class_names]


@dataclass(frozen=True)
class EmbeddingVector:
    """One embedding; when flagged normalized its L2 norm must be 1."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("embedding must be 1-D")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding has non-finite values")
        if self.normalized and abs(float(np.linalg.norm(arr)) - 1.0) > 1e-6:
            raise ValueError("embedding flagged normalized but norm != 1")
        object.__setattr__(self, "values", arr)


def _as_matrix(embeddings) -> np.ndarray:
    """Coerce an (N, D) array or a sequence of EmbeddingVector to float64."""
    if isinstance(embeddings, np.ndarray):
        matrix = np.asarray(embeddings, dtype=np.float64)
    else:
        rows = [
            e.values if isinstance(e, EmbeddingVector) else np.asarray(e, dtype=np.float64)
            for e in embeddings
        ]
        matrix = np.stack(rows) if rows else np.empty((0, 0))
    if matrix.ndim != 2:
        raise ValueError(f"expected a 2-D embedding matrix, got shape {matrix.shape}")
    return matrix


def l2_normalize(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero embedding")
    return matrix / norms


class ConfidenceMatrix:
    """N proposals x K classes of confidences, each in (0, 1), every row
    summing below 1."""

    __slots__ = ("values", "temperature")

    def __init__(self, values: np.ndarray, temperature: float):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("confidence matrix must be 2-D")
        if arr.size and (arr.min() <= 0.0 or arr.max() >= 1.0):
            raise ValueError("confidences must lie strictly inside (0, 1)")
        if arr.size and arr.sum(axis=1).max() >= 1.0:
            raise ValueError("every confidence row must sum below 1")
        self.values = arr
        self.temperature = float(temperature)

    @property
    def n_proposals(self) -> int:
        return self.values.shape[0]

    @property
    def n_classes(self) -> int:
        return self.values.shape[1]


def confidence_from_scores(scores: np.ndarray, temperature: float = 1.0) -> ConfidenceMatrix:
    """Map raw similarity scores (N, K) to confidences via the shifted form
    exp(s - m) / (exp(-m) + sum_j exp(s_j - m)) with m the row max.

    Mathematically every entry is in (0, 1) and every row sums below 1; for
    scores so extreme that float64 saturates (|s| beyond roughly 700) the
    values are nudged back inside the open interval, preserving each row's
    ordering.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] < 1 or scores.shape[1] < 1:
        raise ValueError(f"scores must be (N>=1, K>=1), got shape {scores.shape}")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores contain non-finite values")
    m = scores.max(axis=1, keepdims=True)
    shifted = np.exp(scores - m)
    denom = np.exp(-m) + shifted.sum(axis=1, keepdims=True)
    values = shifted / denom
    for _ in range(3):
        sums = values.sum(axis=1, keepdims=True)
        over = sums >= 1.0
        if not over.any():
            break
        values = np.where(over, values * ((1.0 - 1e-15) / sums), values)
    values = np.clip(values, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    return ConfidenceMatrix(values, temperature)


def confidence_matrix(visual, text, cfg: SccmConfig) -> ConfidenceMatrix:
    """Score N proposal embeddings against K class embeddings."""
    v = _as_matrix(visual)
    t = _as_matrix(text)
    if v.shape[0] < 1 or t.shape[0] < 1:
        raise ValueError("need at least one proposal and one class embedding")
    if v.shape[1] != t.shape[1]:
        raise ValueError(
            f"embedding dimensions differ: proposals {v.shape[1]} vs classes {t.shape[1]}"
        )
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(t))):
        raise ValueError("embeddings contain non-finite values")
    if cfg.normalize_embeddings:
        v = l2_normalize(v)
        t = l2_normalize(t)
    scores = cfg.temperature * (v @ t.T)
    return confidence_from_scores(scores, cfg.temperature)


def predicted_label(row: np.ndarray) -> tuple[int, float]:
    """Argmax class of one confidence row, ties to the lowest index."""
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1 or row.size == 0:
        raise ValueError("confidence row must be 1-D and non-empty")
    idx = int(np.argmax(row))
    return idx, float(row[idx])


def correct_labels(
    proposals: Sequence[DetectionProposal],
    matrix: ConfidenceMatrix,
    cfg: SccmConfig,
) -> tuple[list[DetectionProposal], int]:
    """Relabel proposals whose predicted class beats the initial label per
    the two-threshold rule; returns (proposals, corrections applied).

    ``initial_class_id`` is never touched; a proposal whose predicted class
    already matches its initial label passes through unchanged.
    """
    if matrix.n_proposals != len(proposals):
        raise ValueError(
            f"confidence rows ({matrix.n_proposals}) must match proposals "
            f"({len(proposals)})"
        )
    out: list[DetectionProposal] = []
    corrections = 0
    for proposal, row in zip(proposals, matrix.values):
        if proposal.initial_class_id >= matrix.n_classes:
            raise ValueError(
                f"proposal class {proposal.initial_class_id} outside the "
                f"{matrix.n_classes}-class matrix"
            )
        pred_id, pred_conf = predicted_label(row)
        if pred_id == proposal.initial_class_id:
            out.append(proposal)
            continue
        initial_conf = float(row[proposal.initial_class_id])
        if pred_conf - initial_conf >= cfg.th1 and pred_conf >= cfg.th2:
            if pred_id != proposal.class_id:
                corrections += 1
            out.append(proposal.with_class(pred_id))
        else:
            out.append(proposal)
    if corrections:
        logger.info("label correction: %d proposal(s) relabeled", corrections)
    return out, corrections


def embed_proposals(
    fused: Raster,
    proposals: Sequence[DetectionProposal],
    embedder: Embedder,
) -> list[EmbeddingVector]:
    """Embed every proposal crop, order-aligned with the input."""
    if not proposals:
        return []
    matrix = embedder.embed_boxes(fused, [p.box for p in proposals])
    matrix = _as_matrix(matrix)
    if matrix.shape[0] != len(proposals):
        raise ValueError(
            f"embedder returned {matrix.shape[0]} rows for {len(proposals)} proposals"
        )
    return [EmbeddingVector(row) for row in matrix]
