"""Adapter configuration and checkpoint loading.

Config JSON:

```jsonc
{
  "device": "cpu",
  "text_detector": {"model": "google/owlvit-base-patch32", "score_threshold": 0.1},
  "embedder": {"model": "openai/clip-vit-base-patch32",
               "normalize": true, "text_template": null},
  "segmenter": {"model": "facebook/sam-vit-base"},
  "tiny_self_test": false
}
```

Any capability block may be null/omitted; the handshake then simply does
not advertise it. No open visual-prompt detector checkpoint exists, so
that capability is never offered. ``tiny_self_test: true`` builds small
randomly-initialized models locally (no downloads) so the full wire path
can be exercised offline; outputs are meaningless but well-formed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .adapters import ClipEmbedderAdapter, SamSegmenterAdapter, TextDetectorAdapter

logger = logging.getLogger(__name__)

DEFAULT_TEXT_DETECTOR = "google/owlvit-base-patch32"
DEFAULT_EMBEDDER = "openai/clip-vit-base-patch32"
DEFAULT_SEGMENTER = "facebook/sam-vit-base"


class ShimConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AdapterConfig:
    device: str = "cpu"
    text_detector: dict | None = None
    embedder: dict | None = None
    segmenter: dict | None = None
    tiny_self_test: bool = False

    @classmethod
    def load(cls, path) -> "AdapterConfig":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ShimConfigError(f"cannot read config {path}: {exc}") from exc
        return cls(
            device=str(obj.get("device", "cpu")),
            text_detector=obj.get("text_detector"),
            embedder=obj.get("embedder"),
            segmenter=obj.get("segmenter"),
            tiny_self_test=bool(obj.get("tiny_self_test", False)),
        )


def _load_text_detector(spec: dict, device: str) -> TextDetectorAdapter:
    from transformers import AutoImageProcessor, AutoTokenizer, OwlViTForObjectDetection

    model_id = spec.get("model", DEFAULT_TEXT_DETECTOR)
    logger.info("loading text detector %s", model_id)
    model = OwlViTForObjectDetection.from_pretrained(model_id)
    return TextDetectorAdapter(
        model=model,
        image_processor=AutoImageProcessor.from_pretrained(model_id),
        tokenizer=AutoTokenizer.from_pretrained(model_id),
        device=device,
        score_threshold=float(spec.get("score_threshold", 0.1)),
    )


def _load_embedder(spec: dict, device: str) -> ClipEmbedderAdapter:
    from transformers import AutoImageProcessor, AutoTokenizer, CLIPModel

    model_id = spec.get("model", DEFAULT_EMBEDDER)
    logger.info("loading embedder %s", model_id)
    return ClipEmbedderAdapter(
        model=CLIPModel.from_pretrained(model_id),
        image_processor=AutoImageProcessor.from_pretrained(model_id),
        tokenizer=AutoTokenizer.from_pretrained(model_id),
        device=device,
        normalize=bool(spec.get("normalize", True)),
        text_template=spec.get("text_template"),
    )


def _load_segmenter(spec: dict, device: str) -> SamSegmenterAdapter:
    from transformers import SamModel, SamProcessor

    model_id = spec.get("model", DEFAULT_SEGMENTER)
    logger.info("loading segmenter %s", model_id)
    return SamSegmenterAdapter(
        model=SamModel.from_pretrained(model_id),
        processor=SamProcessor.from_pretrained(model_id),
        device=device,
    )


def build_adapters(config: AdapterConfig) -> dict:
    """Instantiate every configured adapter; raises on load failure so the
    server exits nonzero at startup rather than limping."""
    if config.tiny_self_test:
        from .tiny import build_tiny_adapters

        return build_tiny_adapters(device=config.device)
    adapters: dict = {}
    if config.text_detector is not None:
        adapters["text_detector"] = _load_text_detector(config.text_detector, config.device)
    if config.embedder is not None:
        adapters["embedder"] = _load_embedder(config.embedder, config.device)
    if config.segmenter is not None:
        adapters["segmenter"] = _load_segmenter(config.segmenter, config.device)
    if not adapters:
        raise ShimConfigError("config enables no adapters")
    return adapters
