"""Scene-backed mock backend serving the wire protocol on stdio.

Run as ``python -m openrgbt.backend.mock_server --scene scene.json``; reads
one JSON request per line on stdin and answers on stdout. Exists so the
transport layer and any external client can be exercised end to end with
fully deterministic responses.
"""

from __future__ import annotations

import argparse
import json
import sys

from .mock import DEFAULT_EMBEDDING_DIM, MockBackendSet, MockScene
from .protocol import (
    BackendError,
    DetectionsResult,
    EmbeddingsResult,
    FusionWeightsResult,
    HelloResult,
    ProtocolError,
    SegmentsResult,
    decode_request,
    encode_error,
    encode_response,
)


def handle_request(backends: MockBackendSet, request_id: str, request) -> dict:
    op = request.op
    if op == "hello":
        result = HelloResult(
            embedding_dim=backends.embedding_dim,
            capabilities=backends.capabilities,
        )
    elif op == "detect_text":
        result = DetectionsResult(
            tuple(backends.text.detect_text(request.image, request.classes))
        )
    elif op == "detect_visual":
        result = DetectionsResult(
            tuple(backends.visual.detect_visual(request.image, request.exemplars))
        )
    elif op == "embed_texts":
        result = EmbeddingsResult(backends.embedder.embed_texts(request.texts))
    elif op == "embed_crops":
        if request.boxes is None:
            raise BackendError(
                "the mock embedder resolves crops by geometry and needs the "
                "optional 'boxes' field",
                request_id,
            )
        result = EmbeddingsResult(backends.embedder.embed_boxes(None, request.boxes))
    elif op == "segment":
        result = SegmentsResult(
            tuple(backends.segmenter.segment(request.image, request.boxes))
        )
    elif op == "fusion_weights":
        result = FusionWeightsResult(
            backends.weights.fusion_weights(request.rgb, request.thermal)
        )
    else:
        raise BackendError(f"unsupported op {op!r}", request_id)
    return encode_response(request_id, result)


def serve(scene: MockScene, classes, embedding_dim: int, margin: float, stdin, stdout):
    backends = MockBackendSet.for_scene(
        scene, classes=classes, embedding_dim=embedding_dim, margin=margin
    )
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        request_id = None
        try:
            obj = json.loads(line)
            request_id, request = decode_request(obj)
            response = handle_request(backends, request_id, request)
        except (ProtocolError, BackendError) as exc:
            response = encode_error(getattr(exc, "request_id", None) or request_id or "?", str(exc))
        except json.JSONDecodeError as exc:
            response = encode_error(request_id or "?", f"malformed JSON: {exc}")
        stdout.write(json.dumps(response) + "\n")
        stdout.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scene", required=True, help="scene JSON file")
    parser.add_argument(
        "--classes",
        help="comma-separated class universe for the embedder "
        "(default: the scene's class list)",
    )
    parser.add_argument("--embedding-dim", type=int, default=DEFAULT_EMBEDDING_DIM)
    parser.add_argument("--margin", type=float, default=0.3)
    args = parser.parse_args(argv)

    scene = MockScene.load(args.scene)
    classes = args.classes.split(",") if args.classes else None
    serve(scene, classes, args.embedding_dim, args.margin, sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
