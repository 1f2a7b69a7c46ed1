"""Transports and the wire-backed backend client.

Stdio framing: one JSON request per line on the child's stdin, one JSON
response per line on its stdout, one request in flight per connection.
HTTP framing: the same JSON object POSTed to a fixed URL. Timeouts,
malformed payloads, and closed pipes surface as :class:`TransportError`
with the request id; in-band backend errors surface as
:class:`BackendError`.
"""

from __future__ import annotations

import itertools
import json
import logging
import queue
import subprocess
import threading
import time
from typing import Sequence

import numpy as np

import requests

from ..core import Box, Raster, crop
from .base import Exemplar, RawDetection, SegmentResult
from .protocol import (
    BackendError,
    DetectTextRequest,
    DetectVisualRequest,
    EmbedCropsRequest,
    EmbedTextsRequest,
    FusionWeightsRequest,
    HelloRequest,
    HelloResult,
    ProtocolError,
    SegmentRequest,
    decode_response,
    encode_request,
)

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 60.0


class TransportError(RuntimeError):
    """Transport-level failure (timeout, dead pipe, malformed frame)."""

    def __init__(self, message: str, request_id: str | None = None):
        super().__init__(message if request_id is None else f"[{request_id}] {message}")
        self.request_id = request_id


class StdioTransport:
    """Child process speaking one JSON object per line over its pipes."""

    def __init__(self, cmd: Sequence[str], timeout: float = DEFAULT_TIMEOUT, env=None):
        self.cmd = list(cmd)
        self.timeout = timeout
        self._proc = subprocess.Popen(
            self.cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            env=env,
            text=True,
            bufsize=1,
        )
        self._lines: queue.Queue = queue.Queue()
        self._lock = threading.Lock()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        try:
            for line in self._proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(None)

    def request(self, obj: dict) -> dict:
        request_id = obj.get("id")
        with self._lock:
            if self._proc.poll() is not None:
                raise TransportError("backend process has exited", request_id)
            try:
                self._proc.stdin.write(json.dumps(obj) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise TransportError(f"cannot write to backend: {exc}", request_id) from exc
            try:
                line = self._lines.get(timeout=self.timeout)
            except queue.Empty:
                raise TransportError(
                    f"backend timed out after {self.timeout:.0f}s", request_id
                ) from None
        if line is None:
            raise TransportError("backend closed the pipe", request_id)
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise TransportError(f"malformed JSON from backend: {exc}", request_id) from exc

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


class HttpTransport:
    """POSTs each request object as JSON to a fixed endpoint URL."""

    def __init__(self, url: str, timeout: float = DEFAULT_TIMEOUT, session=None):
        self.url = url
        self.timeout = timeout
        self._session = session or requests.Session()

    def request(self, obj: dict) -> dict:
        request_id = obj.get("id")
        try:
            response = self._session.post(self.url, json=obj, timeout=self.timeout)
            response.raise_for_status()
            return response.json()
        except requests.exceptions.JSONDecodeError as exc:
            raise TransportError(f"malformed JSON from backend: {exc}", request_id) from exc
        except requests.RequestException as exc:
            raise TransportError(f"HTTP request failed: {exc}", request_id) from exc

    def close(self):
        self._session.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


class BackendClient:
    """Typed facade over a transport; satisfies all capability interfaces.

    Transport failures are retried with exponential backoff; in-band
    backend errors are not retried. The handshake's embedding dimension is
    enforced on every embedding response.
    """

    def __init__(self, transport, retries: int = 2, backoff: float = 0.25):
        self._transport = transport
        self._retries = retries
        self._backoff = backoff
        self._ids = itertools.count(1)
        self._hello: HelloResult | None = None

    def close(self):
        self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()

    def _call(self, request):
        request_id = f"r{next(self._ids)}"
        wire = encode_request(request_id, request)
        last: TransportError | None = None
        for attempt in range(self._retries + 1):
            try:
                raw = self._transport.request(wire)
                return decode_response(raw, request.op, request_id)
            except TransportError as exc:
                last = exc
                if attempt < self._retries:
                    delay = self._backoff * (2**attempt)
                    logger.warning(
                        "transport error (%s); retrying in %.2fs", exc, delay
                    )
                    time.sleep(delay)
        assert last is not None
        raise last

    # -- handshake ----------------------------------------------------------

    def hello(self) -> HelloResult:
        if self._hello is None:
            self._hello = self._call(HelloRequest())
        return self._hello

    @property
    def embedding_dim(self) -> int:
        return self.hello().embedding_dim

    @property
    def capabilities(self) -> tuple[str, ...]:
        return self.hello().capabilities

    def _check_embeddings(self, matrix: np.ndarray, expected_rows: int) -> np.ndarray:
        if matrix.shape[0] != expected_rows:
            raise ProtocolError(
                f"expected {expected_rows} embeddings, got {matrix.shape[0]}"
            )
        if matrix.shape[0] and matrix.shape[1] != self.embedding_dim:
            raise ProtocolError(
                f"embedding length {matrix.shape[1]} does not match the "
                f"declared dimension {self.embedding_dim}"
            )
        return matrix

    # -- capabilities --------------------------------------------------------

    def detect_text(self, image: Raster, class_names: Sequence[str]) -> list[RawDetection]:
        result = self._call(DetectTextRequest(image, tuple(class_names)))
        return list(result.detections)

    def detect_visual(
        self, image: Raster, exemplars: Sequence[Exemplar]
    ) -> list[RawDetection]:
        result = self._call(DetectVisualRequest(image, tuple(exemplars)))
        return list(result.detections)

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        result = self._call(EmbedTextsRequest(tuple(texts)))
        return self._check_embeddings(result.embeddings, len(tuple(texts)))

    def embed_boxes(self, image: Raster, boxes: Sequence[Box]) -> np.ndarray:
        boxes = tuple(boxes)
        crops = tuple(crop(image, b) for b in boxes)
        result = self._call(EmbedCropsRequest(crops, boxes))
        return self._check_embeddings(result.embeddings, len(boxes))

    def segment(self, image: Raster, boxes: Sequence[Box]) -> list[SegmentResult]:
        result = self._call(SegmentRequest(image, tuple(boxes)))
        return list(result.segments)

    def fusion_weights(self, rgb: Raster, thermal: Raster) -> np.ndarray:
        result = self._call(FusionWeightsRequest(rgb, thermal))
        return result.weights


def open_transport(endpoint: dict, timeout: float = DEFAULT_TIMEOUT):
    """Build a transport from an endpoint config:
    ``{"transport": "stdio", "cmd": [...]}`` or
    ``{"transport": "http", "url": "..."}``."""
    kind = endpoint.get("transport")
    if kind == "stdio":
        return StdioTransport(endpoint["cmd"], timeout=endpoint.get("timeout", timeout))
    if kind == "http":
        return HttpTransport(endpoint["url"], timeout=endpoint.get("timeout", timeout))
    raise ValueError(f"unknown transport kind {kind!r}")


__all__ = [
    "BackendClient",
    "BackendError",
    "HttpTransport",
    "StdioTransport",
    "TransportError",
    "open_transport",
    "DEFAULT_TIMEOUT",
]
