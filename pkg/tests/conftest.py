import numpy as np
import pytest

from openrgbt.backend.mock import generate_scene_suite
from openrgbt.core import Box, Raster
from openrgbt.fusion import ImagePair


@pytest.fixture
def rng():
    return np.random.default_rng(20260811)


@pytest.fixture
def small_pair(rng):
    rgb = Raster(rng.integers(0, 256, size=(24, 32, 3), dtype=np.uint8))
    thermal = Raster(rng.integers(0, 256, size=(24, 32), dtype=np.uint8))
    return ImagePair(rgb=rgb, thermal=thermal, id="small")


@pytest.fixture
def scene_suite(tmp_path):
    """Factory for deterministic mock scene suites."""

    def make(count=4, seed=5, exemplar_only=("cone",), **kwargs):
        scene_dir = tmp_path / f"scenes_{seed}_{count}"
        scenes = generate_scene_suite(
            scene_dir,
            count=count,
            seed=seed,
            classes=["car", "person", "bike", "cone"],
            exemplar_only=list(exemplar_only),
            **kwargs,
        )
        return scene_dir, scenes

    return make


def random_box(rng, min_size=0.05, max_size=0.5) -> Box:
    w = float(rng.uniform(min_size, max_size))
    h = float(rng.uniform(min_size, max_size))
    x = float(rng.uniform(0.0, 1.0 - w))
    y = float(rng.uniform(0.0, 1.0 - h))
    return Box(x, y, w, h)
