"""Wire codec: encode/decode must be the identity for every message type."""

import json

import numpy as np
import pytest

from openrgbt.backend.base import Exemplar, RawDetection, SegmentResult
from openrgbt.backend import protocol as proto
from openrgbt.core import Raster, rle_encode

from conftest import random_box


def random_raster(rng, channels=None):
    h = int(rng.integers(1, 20))
    w = int(rng.integers(1, 20))
    channels = channels if channels is not None else int(rng.choice([1, 3]))
    shape = (h, w) if channels == 1 else (h, w, 3)
    return Raster(rng.integers(0, 256, size=shape, dtype=np.uint8))


def random_mask(rng):
    h = int(rng.integers(1, 15))
    w = int(rng.integers(1, 15))
    return rle_encode((rng.random((h, w)) > 0.5).astype(np.uint8))


def random_label(rng):
    words = ["car", "person", "bike", "traffic cone", "Straßen-Schild", "犬"]
    return str(rng.choice(words))


def random_request(rng):
    kind = int(rng.integers(0, 7))
    if kind == 0:
        return proto.HelloRequest()
    if kind == 1:
        classes = tuple(random_label(rng) for _ in range(rng.integers(1, 5)))
        return proto.DetectTextRequest(random_raster(rng), classes)
    if kind == 2:
        exemplars = tuple(
            Exemplar(random_label(rng), random_box(rng), random_raster(rng))
            for _ in range(rng.integers(1, 4))
        )
        return proto.DetectVisualRequest(random_raster(rng), exemplars)
    if kind == 3:
        return proto.EmbedTextsRequest(tuple(random_label(rng) for _ in range(rng.integers(1, 6))))
    if kind == 4:
        n = int(rng.integers(1, 4))
        crops = tuple(random_raster(rng) for _ in range(n))
        boxes = tuple(random_box(rng) for _ in range(n)) if rng.random() < 0.7 else None
        return proto.EmbedCropsRequest(crops, boxes)
    if kind == 5:
        boxes = tuple(random_box(rng) for _ in range(rng.integers(1, 5)))
        return proto.SegmentRequest(random_raster(rng), boxes)
    return proto.FusionWeightsRequest(random_raster(rng, 3), random_raster(rng, 1))


def random_result(rng, op):
    if op == "hello":
        return proto.HelloResult(
            embedding_dim=int(rng.integers(8, 64)),
            capabilities=tuple(sorted(rng.choice(proto.ALL_CAPABILITIES, size=3, replace=False))),
        )
    if op in ("detect_text", "detect_visual"):
        return proto.DetectionsResult(
            tuple(
                RawDetection(random_box(rng), random_label(rng), float(rng.random()))
                for _ in range(rng.integers(0, 5))
            )
        )
    if op in ("embed_texts", "embed_crops"):
        return proto.EmbeddingsResult(rng.standard_normal((int(rng.integers(1, 5)), 16)))
    if op == "segment":
        return proto.SegmentsResult(
            tuple(
                SegmentResult(random_mask(rng), random_label(rng))
                for _ in range(rng.integers(0, 4))
            )
        )
    return proto.FusionWeightsResult(rng.random((int(rng.integers(1, 8)), int(rng.integers(1, 8)))))


def test_request_roundtrip_randomized(rng):
    for i in range(300):
        request = random_request(rng)
        wire = json.loads(json.dumps(proto.encode_request(f"id{i}", request)))
        request_id, decoded = proto.decode_request(wire)
        assert request_id == f"id{i}"
        assert decoded == request


def test_response_roundtrip_randomized(rng):
    ops = list(proto.RESULT_TYPES)
    for i in range(300):
        op = ops[i % len(ops)]
        result = random_result(rng, op)
        wire = json.loads(json.dumps(proto.encode_response(f"id{i}", result)))
        decoded = proto.decode_response(wire, op, f"id{i}")
        assert decoded == result


def test_unknown_op_rejected():
    with pytest.raises(proto.ProtocolError, match="unknown op"):
        proto.decode_request({"id": "x", "op": "levitate"})


def test_missing_id_rejected():
    with pytest.raises(proto.ProtocolError, match="missing a string 'id'"):
        proto.decode_request({"op": "hello"})


def test_response_id_must_echo_request():
    wire = proto.encode_response("a", proto.HelloResult(16, ("detect_text",)))
    with pytest.raises(proto.ProtocolError, match="does not echo"):
        proto.decode_response(wire, "hello", "b")


def test_error_response_surfaces_as_backend_error():
    wire = proto.encode_error("r7", "model exploded")
    with pytest.raises(proto.BackendError, match="model exploded") as err:
        proto.decode_response(wire, "hello", "r7")
    assert err.value.request_id == "r7"


def test_malformed_request_payload():
    wire = {"id": "x", "op": "detect_text", "classes": ["car"]}  # image missing
    with pytest.raises(proto.ProtocolError, match="malformed detect_text"):
        proto.decode_request(wire)


def test_exemplar_without_image_rejected_on_encode():
    request = proto.DetectVisualRequest(
        image=Raster(np.zeros((4, 4, 3), dtype=np.uint8)),
        exemplars=(Exemplar("car", random_box(np.random.default_rng(0))),),
    )
    with pytest.raises(proto.ProtocolError, match="must carry an image"):
        proto.encode_request("x", request)


def test_image_payload_is_base64_png(rng):
    raster = random_raster(rng)
    data = proto.encode_image(raster)
    assert proto.decode_image(data) == raster
    with pytest.raises(proto.ProtocolError):
        proto.decode_image("!!not base64!!")
