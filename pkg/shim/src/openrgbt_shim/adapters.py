"""Model adapters: each wraps a loaded model behind one wire capability.

Adapters take already-constructed model/processor objects so tests can
inject tiny locally-built models; :mod:`.config` owns loading real
checkpoints by identifier.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
import torch
from PIL import Image

from .wire import box_to_pixels_xyxy, normalize_xyxy

logger = logging.getLogger(__name__)


class TextDetectorAdapter:
    """Zero-shot text-grounded detection (OWL-ViT-style interface): the
    class list is tokenized as queries and detections come back as indices
    into it."""

    capability = "detect_text"

    def __init__(self, model, image_processor, tokenizer, device="cpu", score_threshold=0.1):
        self.model = model.to(device).eval()
        self.image_processor = image_processor
        self.tokenizer = tokenizer
        self.device = device
        self.score_threshold = score_threshold

    @torch.no_grad()
    def detect(self, image: Image.Image, class_names: Sequence[str]) -> list[dict]:
        if not class_names:
            return []
        image = image.convert("RGB")
        text_inputs = self.tokenizer(
            list(class_names), padding=True, truncation=True, return_tensors="pt"
        ).to(self.device)
        image_inputs = self.image_processor(images=image, return_tensors="pt").to(self.device)
        outputs = self.model(
            input_ids=text_inputs["input_ids"],
            attention_mask=text_inputs.get("attention_mask"),
            pixel_values=image_inputs["pixel_values"],
        )
        [result] = self.image_processor.post_process_object_detection(
            outputs, threshold=self.score_threshold, target_sizes=[(image.height, image.width)]
        )
        detections = []
        for box, label, score in zip(result["boxes"], result["labels"], result["scores"]):
            normalized = normalize_xyxy(box.tolist(), image.width, image.height)
            if normalized is None:
                continue
            detections.append(
                {
                    "box": normalized,
                    "label": str(class_names[int(label)]),
                    "score": float(score),
                }
            )
        return detections


class ClipEmbedderAdapter:
    """Contrastive image/text embedding with unit-norm outputs."""

    capabilities = ("embed_texts", "embed_crops")

    def __init__(
        self,
        model,
        image_processor,
        tokenizer,
        device="cpu",
        normalize=True,
        text_template: str | None = None,
    ):
        self.model = model.to(device).eval()
        self.image_processor = image_processor
        self.tokenizer = tokenizer
        self.device = device
        self.normalize = normalize
        self.text_template = text_template

    @property
    def embedding_dim(self) -> int:
        return int(self.model.config.projection_dim)

    def _finish(self, features) -> np.ndarray:
        # transformers < 5 returns the projected tensor; >= 5 returns the
        # encoder output with the projection in pooler_output.
        if not isinstance(features, torch.Tensor):
            features = features.pooler_output
        matrix = features.detach().cpu().numpy().astype(np.float64)
        if self.normalize:
            matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
        return matrix

    @torch.no_grad()
    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        if self.text_template is not None:
            texts = [self.text_template.format(t) for t in texts]
        inputs = self.tokenizer(
            list(texts), padding=True, truncation=True, return_tensors="pt"
        ).to(self.device)
        return self._finish(self.model.get_text_features(**inputs))

    @torch.no_grad()
    def embed_crops(self, crops: Sequence[Image.Image]) -> np.ndarray:
        images = [c.convert("RGB") for c in crops]
        inputs = self.image_processor(images=images, return_tensors="pt").to(self.device)
        return self._finish(self.model.get_image_features(**inputs))


class SamSegmenterAdapter:
    """Box-promptable mask generation; emits the highest-IoU candidate per
    box. Captions are empty: no open captioning head ships with this shim."""

    capability = "segment"

    def __init__(self, model, processor, device="cpu"):
        self.model = model.to(device).eval()
        self.processor = processor
        self.device = device

    @torch.no_grad()
    def segment(self, image: Image.Image, boxes) -> list[tuple[np.ndarray, str]]:
        image = image.convert("RGB")
        if not boxes:
            return []
        pixel_boxes = [box_to_pixels_xyxy(b, image.width, image.height) for b in boxes]
        inputs = self.processor(
            images=image, input_boxes=[pixel_boxes], return_tensors="pt"
        ).to(self.device)
        outputs = self.model(**inputs)
        [masks] = self.processor.post_process_masks(
            outputs.pred_masks.cpu(),
            inputs["original_sizes"].cpu(),
            inputs["reshaped_input_sizes"].cpu(),
        )
        scores = outputs.iou_scores.cpu()[0]  # (n_boxes, n_candidates)
        results = []
        for i in range(masks.shape[0]):
            best = int(torch.argmax(scores[i]))
            results.append((masks[i, best].numpy().astype(np.uint8), ""))
        return results
