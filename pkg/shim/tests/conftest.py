import base64
import io
import json
import os

import numpy as np
import pytest
from PIL import Image

os.environ.setdefault("HF_HUB_OFFLINE", "1")


@pytest.fixture(scope="session")
def tiny_server():
    from openrgbt_shim.server import ShimServer
    from openrgbt_shim.tiny import build_tiny_adapters

    return ShimServer(build_tiny_adapters())


@pytest.fixture
def rng():
    return np.random.default_rng(99)


def image_b64(array: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(array).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def random_image_b64(rng, h=48, w=60) -> str:
    return image_b64(rng.integers(0, 255, (h, w, 3), dtype=np.uint8))


def write_fixture_dataset(root, count=5, seed=5, size=(48, 60)):
    """Small generic-layout dataset of random pairs with labels."""
    h, w = size
    rng = np.random.default_rng(seed)
    for sub in ("rgb", "thermal", "labels"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for i in range(count):
        Image.fromarray(rng.integers(0, 255, (h, w, 3), dtype=np.uint8)).save(
            root / "rgb" / f"s{i}.png"
        )
        Image.fromarray(rng.integers(0, 255, (h, w), dtype=np.uint8), mode="L").save(
            root / "thermal" / f"s{i}.png"
        )
        gt = rng.integers(0, 2, (h, w)).astype(np.uint8)
        gt[rng.random((h, w)) < 0.3] = 255
        Image.fromarray(gt, mode="L").save(root / "labels" / f"s{i}.png")
