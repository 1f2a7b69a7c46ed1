"""Message types and JSON codec for the backend wire protocol.

One request maps to one JSON object (one line in stdio framing, one POST
body in HTTP framing); responses echo the request ``id``. Images travel as
base64 PNG, boxes as normalized ``[x, y, w, h]``, embeddings as float
arrays, masks as run-length codes. The full wire contract is documented in
``docs/protocol.md``.
"""

from __future__ import annotations

import base64
import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

from ..core import Box, Raster, RleMask
from .base import Exemplar, RawDetection, SegmentResult

PROTOCOL_VERSION = 1

CAP_DETECT_TEXT = "detect_text"
CAP_DETECT_VISUAL = "detect_visual"
CAP_EMBED_TEXTS = "embed_texts"
CAP_EMBED_CROPS = "embed_crops"
CAP_SEGMENT = "segment"
CAP_FUSION_WEIGHTS = "fusion_weights"

ALL_CAPABILITIES = (
    CAP_DETECT_TEXT,
    CAP_DETECT_VISUAL,
    CAP_EMBED_TEXTS,
    CAP_EMBED_CROPS,
    CAP_SEGMENT,
    CAP_FUSION_WEIGHTS,
)


class ProtocolError(RuntimeError):
    """Malformed or contract-violating message; carries the request id."""

    def __init__(self, message: str, request_id: str | None = None):
        super().__init__(message if request_id is None else f"[{request_id}] {message}")
        self.request_id = request_id


class BackendError(RuntimeError):
    """In-band error response from a backend."""

    def __init__(self, message: str, request_id: str | None = None):
        super().__init__(message)
        self.request_id = request_id


def encode_image(raster: Raster) -> str:
    buf = io.BytesIO()
    mode = "L" if raster.channels == 1 else "RGB"
    Image.fromarray(np.asarray(raster.pixels), mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_image(data: str) -> Raster:
    try:
        raw = base64.b64decode(data.encode("ascii"), validate=True)
        with Image.open(io.BytesIO(raw)) as img:
            if img.mode == "L":
                return Raster(np.asarray(img))
            return Raster(np.asarray(img.convert("RGB")))
    except Exception as exc:
        raise ProtocolError(f"undecodable image payload: {exc}") from exc


def _box_to_wire(box: Box) -> list[float]:
    return box.to_list()


def _box_from_wire(values) -> Box:
    try:
        return Box.from_list(values)
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"invalid box payload {values!r}: {exc}") from exc


def _mask_to_wire(mask: RleMask) -> dict:
    return mask.to_json()


def _mask_from_wire(obj) -> RleMask:
    try:
        return RleMask.from_json(obj)
    except (TypeError, KeyError, ValueError) as exc:
        raise ProtocolError(f"invalid mask payload: {exc}") from exc


# --------------------------------------------------------------------------
# Requests


@dataclass(frozen=True)
class HelloRequest:
    op = "hello"

    def to_wire(self) -> dict:
        return {}

    @classmethod
    def from_wire(cls, obj: dict) -> "HelloRequest":
        return cls()


@dataclass(frozen=True)
class DetectTextRequest:
    op = "detect_text"
    image: Raster
    classes: tuple[str, ...]

    def to_wire(self) -> dict:
        return {"image": encode_image(self.image), "classes": list(self.classes)}

    @classmethod
    def from_wire(cls, obj: dict) -> "DetectTextRequest":
        return cls(decode_image(obj["image"]), tuple(str(c) for c in obj["classes"]))


@dataclass(frozen=True)
class DetectVisualRequest:
    op = "detect_visual"
    image: Raster
    exemplars: tuple[Exemplar, ...]

    def to_wire(self) -> dict:
        items = []
        for ex in self.exemplars:
            if ex.image is None:
                raise ProtocolError("exemplars must carry an image on the wire")
            items.append(
                {
                    "class": ex.class_name,
                    "image": encode_image(ex.image),
                    "box": _box_to_wire(ex.box),
                }
            )
        return {"image": encode_image(self.image), "exemplars": items}

    @classmethod
    def from_wire(cls, obj: dict) -> "DetectVisualRequest":
        exemplars = tuple(
            Exemplar(
                class_name=str(item["class"]),
                box=_box_from_wire(item["box"]),
                image=decode_image(item["image"]),
            )
            for item in obj["exemplars"]
        )
        return cls(decode_image(obj["image"]), exemplars)


@dataclass(frozen=True)
class EmbedTextsRequest:
    op = "embed_texts"
    texts: tuple[str, ...]

    def to_wire(self) -> dict:
        return {"texts": list(self.texts)}

    @classmethod
    def from_wire(cls, obj: dict) -> "EmbedTextsRequest":
        return cls(tuple(str(t) for t in obj["texts"]))


@dataclass(frozen=True)
class EmbedCropsRequest:
    """Crop pixels to embed; the source boxes ride along so geometry-aware
    backends (the deterministic mock) can resolve them without pixels."""

    op = "embed_crops"
    crops: tuple[Raster, ...]
    boxes: tuple[Box, ...] | None = None

    def to_wire(self) -> dict:
        out: dict = {"crops": [encode_image(c) for c in self.crops]}
        if self.boxes is not None:
            out["boxes"] = [_box_to_wire(b) for b in self.boxes]
        return out

    @classmethod
    def from_wire(cls, obj: dict) -> "EmbedCropsRequest":
        boxes = obj.get("boxes")
        return cls(
            tuple(decode_image(c) for c in obj["crops"]),
            None if boxes is None else tuple(_box_from_wire(b) for b in boxes),
        )


@dataclass(frozen=True)
class SegmentRequest:
    op = "segment"
    image: Raster
    boxes: tuple[Box, ...]

    def to_wire(self) -> dict:
        return {
            "image": encode_image(self.image),
            "boxes": [_box_to_wire(b) for b in self.boxes],
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "SegmentRequest":
        return cls(
            decode_image(obj["image"]),
            tuple(_box_from_wire(b) for b in obj["boxes"]),
        )


@dataclass(frozen=True)
class FusionWeightsRequest:
    op = "fusion_weights"
    rgb: Raster
    thermal: Raster

    def to_wire(self) -> dict:
        return {"rgb": encode_image(self.rgb), "thermal": encode_image(self.thermal)}

    @classmethod
    def from_wire(cls, obj: dict) -> "FusionWeightsRequest":
        return cls(decode_image(obj["rgb"]), decode_image(obj["thermal"]))


REQUEST_TYPES = {
    cls.op: cls
    for cls in (
        HelloRequest,
        DetectTextRequest,
        DetectVisualRequest,
        EmbedTextsRequest,
        EmbedCropsRequest,
        SegmentRequest,
        FusionWeightsRequest,
    )
}


def encode_request(request_id: str, request) -> dict:
    return {"id": request_id, "op": request.op, **request.to_wire()}


def decode_request(obj: dict):
    """Return (request_id, request object) or raise ProtocolError."""
    if not isinstance(obj, dict):
        raise ProtocolError(f"request must be an object, got {type(obj).__name__}")
    request_id = obj.get("id")
    if not isinstance(request_id, str) or not request_id:
        raise ProtocolError("request is missing a string 'id'")
    op = obj.get("op")
    cls = REQUEST_TYPES.get(op)
    if cls is None:
        raise ProtocolError(f"unknown op {op!r}", request_id)
    try:
        return request_id, cls.from_wire(obj)
    except ProtocolError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed {op} request: {exc}", request_id) from exc


# --------------------------------------------------------------------------
# Results


@dataclass(frozen=True)
class HelloResult:
    op = "hello"
    embedding_dim: int
    capabilities: tuple[str, ...]
    protocol_version: int = PROTOCOL_VERSION

    def to_wire(self) -> dict:
        return {
            "embedding_dim": self.embedding_dim,
            "capabilities": list(self.capabilities),
            "protocol_version": self.protocol_version,
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "HelloResult":
        return cls(
            int(obj["embedding_dim"]),
            tuple(str(c) for c in obj["capabilities"]),
            int(obj.get("protocol_version", PROTOCOL_VERSION)),
        )


@dataclass(frozen=True)
class DetectionsResult:
    detections: tuple[RawDetection, ...]

    def to_wire(self) -> dict:
        return {
            "detections": [
                {"box": _box_to_wire(d.box), "label": d.label, "score": d.score}
                for d in self.detections
            ]
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "DetectionsResult":
        return cls(
            tuple(
                RawDetection(
                    box=_box_from_wire(item["box"]),
                    label=str(item["label"]),
                    score=float(item["score"]),
                )
                for item in obj["detections"]
            )
        )


class EmbeddingsResult:
    """Row-per-input embedding matrix; compares by array equality."""

    __slots__ = ("embeddings",)

    def __init__(self, embeddings: np.ndarray):
        arr = np.asarray(embeddings, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("embeddings must be a 2-D array")
        self.embeddings = arr

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, EmbeddingsResult)
            and self.embeddings.shape == other.embeddings.shape
            and bool(np.array_equal(self.embeddings, other.embeddings))
        )

    def __repr__(self) -> str:
        return f"EmbeddingsResult({self.embeddings.shape})"

    def to_wire(self) -> dict:
        return {"embeddings": self.embeddings.tolist()}

    @classmethod
    def from_wire(cls, obj: dict) -> "EmbeddingsResult":
        return cls(np.array(obj["embeddings"], dtype=np.float64))


@dataclass(frozen=True)
class SegmentsResult:
    segments: tuple[SegmentResult, ...]

    def to_wire(self) -> dict:
        return {
            "masks": [_mask_to_wire(s.mask) for s in self.segments],
            "captions": [s.caption for s in self.segments],
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "SegmentsResult":
        masks = [_mask_from_wire(m) for m in obj["masks"]]
        captions = [str(c) for c in obj["captions"]]
        if len(masks) != len(captions):
            raise ProtocolError("masks and captions must align")
        return cls(tuple(SegmentResult(m, c) for m, c in zip(masks, captions)))


class FusionWeightsResult:
    __slots__ = ("weights",)

    def __init__(self, weights: np.ndarray):
        arr = np.asarray(weights, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("weights must be a 2-D array")
        self.weights = arr

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FusionWeightsResult)
            and self.weights.shape == other.weights.shape
            and bool(np.array_equal(self.weights, other.weights))
        )

    def __repr__(self) -> str:
        return f"FusionWeightsResult({self.weights.shape})"

    def to_wire(self) -> dict:
        return {"weights": self.weights.tolist()}

    @classmethod
    def from_wire(cls, obj: dict) -> "FusionWeightsResult":
        return cls(np.array(obj["weights"], dtype=np.float64))


RESULT_TYPES = {
    "hello": HelloResult,
    "detect_text": DetectionsResult,
    "detect_visual": DetectionsResult,
    "embed_texts": EmbeddingsResult,
    "embed_crops": EmbeddingsResult,
    "segment": SegmentsResult,
    "fusion_weights": FusionWeightsResult,
}


def encode_response(request_id: str, result) -> dict:
    return {"id": request_id, "ok": True, "result": result.to_wire()}


def encode_error(request_id: str, message: str) -> dict:
    return {"id": request_id, "ok": False, "error": str(message)}


def decode_response(obj: dict, op: str, expected_id: str):
    """Return the op's result object, or raise BackendError/ProtocolError."""
    if not isinstance(obj, dict):
        raise ProtocolError(
            f"response must be an object, got {type(obj).__name__}", expected_id
        )
    if obj.get("id") != expected_id:
        raise ProtocolError(
            f"response id {obj.get('id')!r} does not echo request id", expected_id
        )
    if not obj.get("ok"):
        raise BackendError(str(obj.get("error", "unspecified backend error")), expected_id)
    cls = RESULT_TYPES.get(op)
    if cls is None:
        raise ProtocolError(f"no result type for op {op!r}", expected_id)
    try:
        return cls.from_wire(obj["result"])
    except ProtocolError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed {op} result: {exc}", expected_id) from exc
