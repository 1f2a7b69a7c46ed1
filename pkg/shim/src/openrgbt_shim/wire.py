"""Server-side wire helpers: payload codecs and the response envelope.

Implements the counterpart of the engine's protocol document: images as
base64 PNG, boxes as normalized [x, y, w, h], masks as run-length codes
starting with a background run, responses echoing the request id.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image

PROTOCOL_VERSION = 1


class WireError(ValueError):
    """Malformed request payload."""


def decode_image(data: str) -> Image.Image:
    try:
        raw = base64.b64decode(data.encode("ascii"), validate=True)
        img = Image.open(io.BytesIO(raw))
        img.load()
        return img.convert("RGB") if img.mode not in ("RGB", "L") else img
    except WireError:
        raise
    except Exception as exc:
        raise WireError(f"undecodable image payload: {exc}") from exc


def encode_mask(mask: np.ndarray) -> dict:
    """Binary (H, W) array to alternating background/foreground runs."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise WireError("mask must be 2-D")
    h, w = mask.shape
    bits = mask.reshape(-1) != 0
    if bits.size == 0:
        return {"width": w, "height": h, "runs": [0]}
    changes = np.flatnonzero(bits[1:] != bits[:-1]) + 1
    bounds = np.concatenate(([0], changes, [bits.size]))
    runs = np.diff(bounds).tolist()
    if bits[0]:
        runs = [0] + runs
    return {"width": w, "height": h, "runs": [int(r) for r in runs]}


def decode_box(values) -> tuple[float, float, float, float]:
    try:
        x, y, w, h = (float(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise WireError(f"invalid box {values!r}") from exc
    if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > 1 + 1e-9 or y + h > 1 + 1e-9:
        raise WireError(f"box outside the unit square: {values!r}")
    return x, y, w, h


def box_to_pixels_xyxy(box, width: int, height: int) -> list[float]:
    """Normalized xywh to absolute corner coordinates."""
    x, y, w, h = box
    return [x * width, y * height, (x + w) * width, (y + h) * height]


def normalize_xyxy(box_xyxy, width: int, height: int):
    """Absolute corners to clamped normalized xywh; None when degenerate."""
    x0, y0, x1, y1 = (float(v) for v in box_xyxy)
    x0, x1 = sorted((max(0.0, min(x0, width)), max(0.0, min(x1, width))))
    y0, y1 = sorted((max(0.0, min(y0, height)), max(0.0, min(y1, height))))
    if x1 - x0 < 1e-6 or y1 - y0 < 1e-6:
        return None
    return [x0 / width, y0 / height, (x1 - x0) / width, (y1 - y0) / height]


def ok_response(request_id: str, result: dict) -> dict:
    return {"id": request_id, "ok": True, "result": result}


def error_response(request_id: str, message: str) -> dict:
    return {"id": request_id, "ok": False, "error": str(message)}
