"""Protocol server: dispatches wire requests to the loaded adapters.

Launch as ``shim --config cfg.json`` (stdio framing, one JSON object per
line) or ``shim --config cfg.json --http :9090`` (the same objects POSTed
to the port). Model loading happens at startup; a load failure exits
nonzero. Per-request errors are answered in-band.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .config import AdapterConfig, ShimConfigError, build_adapters
from .wire import (
    PROTOCOL_VERSION,
    WireError,
    decode_box,
    decode_image,
    encode_mask,
    error_response,
    ok_response,
)

logger = logging.getLogger(__name__)


class ShimServer:
    def __init__(self, adapters: dict):
        self.adapters = adapters

    @property
    def capabilities(self) -> list[str]:
        caps = []
        if "text_detector" in self.adapters:
            caps.append("detect_text")
        if "embedder" in self.adapters:
            caps.extend(["embed_texts", "embed_crops"])
        if "segmenter" in self.adapters:
            caps.append("segment")
        return caps

    @property
    def embedding_dim(self) -> int:
        embedder = self.adapters.get("embedder")
        return embedder.embedding_dim if embedder is not None else 0

    def handle_line(self, line: str) -> dict:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            return error_response("?", f"malformed JSON: {exc}")
        return self.handle(obj)

    def handle(self, obj: dict) -> dict:
        request_id = obj.get("id") if isinstance(obj, dict) else None
        if not isinstance(request_id, str) or not request_id:
            return error_response("?", "request is missing a string 'id'")
        op = obj.get("op")
        try:
            return ok_response(request_id, self._dispatch(op, obj))
        except WireError as exc:
            return error_response(request_id, str(exc))
        except KeyError as exc:
            return error_response(request_id, f"missing request field {exc}")
        except Exception as exc:  # per-request errors stay in-band
            logger.exception("request %s (%s) failed", request_id, op)
            return error_response(request_id, f"{type(exc).__name__}: {exc}")

    def _adapter(self, name: str, op: str):
        adapter = self.adapters.get(name)
        if adapter is None:
            raise WireError(f"capability {op!r} is not available")
        return adapter

    def _dispatch(self, op: str, obj: dict) -> dict:
        if op == "hello":
            return {
                "embedding_dim": self.embedding_dim,
                "capabilities": self.capabilities,
                "protocol_version": PROTOCOL_VERSION,
            }
        if op == "detect_text":
            adapter = self._adapter("text_detector", op)
            image = decode_image(obj["image"])
            classes = [str(c) for c in obj["classes"]]
            return {"detections": adapter.detect(image, classes)}
        if op == "embed_texts":
            adapter = self._adapter("embedder", op)
            texts = [str(t) for t in obj["texts"]]
            return {"embeddings": adapter.embed_texts(texts).tolist()}
        if op == "embed_crops":
            adapter = self._adapter("embedder", op)
            crops = [decode_image(c) for c in obj["crops"]]
            return {"embeddings": adapter.embed_crops(crops).tolist()}
        if op == "segment":
            adapter = self._adapter("segmenter", op)
            image = decode_image(obj["image"])
            boxes = [decode_box(b) for b in obj["boxes"]]
            segments = adapter.segment(image, boxes)
            return {
                "masks": [encode_mask(mask) for mask, _ in segments],
                "captions": [caption for _, caption in segments],
            }
        if op == "detect_visual":
            raise WireError(
                "capability 'detect_visual' is not available: no open "
                "visual-prompt detector checkpoint exists"
            )
        raise WireError(f"unknown op {op!r}")


def serve_stdio(server: ShimServer, stdin=None, stdout=None) -> None:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        stdout.write(json.dumps(server.handle_line(line)) + "\n")
        stdout.flush()


def serve_http(server: ShimServer, port: int) -> None:
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length).decode("utf-8")
            payload = json.dumps(server.handle_line(body)).encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, fmt, *args):
            logger.debug("http: " + fmt, *args)

    httpd = ThreadingHTTPServer(("127.0.0.1", port), Handler)
    logger.info("serving HTTP on 127.0.0.1:%d", httpd.server_address[1])
    httpd.serve_forever()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", required=True, help="adapter config JSON")
    parser.add_argument(
        "--http", default=None, metavar=":PORT", help="serve HTTP instead of stdio"
    )
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr)

    try:
        adapters = build_adapters(AdapterConfig.load(args.config))
    except (ShimConfigError, Exception) as exc:  # noqa: BLE001 - startup must fail loudly
        logger.error("failed to load adapters: %s", exc)
        return 1
    server = ShimServer(adapters)
    logger.info(
        "ready: capabilities=%s embedding_dim=%d", server.capabilities, server.embedding_dim
    )
    if args.http is not None:
        serve_http(server, int(args.http.lstrip(":")))
    else:
        serve_stdio(server)
    return 0


if __name__ == "__main__":
    sys.exit(main())
