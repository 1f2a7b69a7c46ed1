import numpy as np
import pytest

from openrgbt.core import (
    Box,
    Raster,
    RleMask,
    Vocabulary,
    box_iou,
    crop,
    load_label_png,
    rle_decode,
    rle_encode,
    save_label_png,
)

from conftest import random_box


class TestBox:
    def test_valid(self):
        Box(0.0, 0.0, 1.0, 1.0)
        Box(0.25, 0.5, 0.5, 0.5)

    @pytest.mark.parametrize(
        "xywh",
        [
            (-0.1, 0.0, 0.5, 0.5),
            (0.0, 0.0, 0.0, 0.5),
            (0.0, 0.0, 0.5, -0.2),
            (0.6, 0.0, 0.5, 0.5),
            (0.0, 0.9, 0.5, 0.2),
            (float("nan"), 0.0, 0.5, 0.5),
        ],
    )
    def test_invalid(self, xywh):
        with pytest.raises(ValueError):
            Box(*xywh)

    def test_pixel_conversion_floor_origin_round_extent(self):
        assert Box(0.1, 0.1, 0.33, 0.33).to_pixels(100, 100) == (10, 10, 33, 33)
        assert Box(0.0, 0.0, 0.5, 0.5).to_pixels(100, 100) == (0, 0, 50, 50)
        assert Box(0.0, 0.0, 1.0, 1.0).to_pixels(64, 48) == (0, 0, 64, 48)

    def test_pixel_conversion_minimum_one_pixel(self):
        x0, y0, w, h = Box(0.5, 0.5, 1e-4, 1e-4).to_pixels(10, 10)
        assert (w, h) == (1, 1)


def _grid_iou(a: Box, b: Box, n: int = 1000) -> float:
    """Independent oracle: rasterize both boxes on an n x n grid."""
    ys, xs = np.mgrid[0:n, 0:n]
    cx = (xs + 0.5) / n
    cy = (ys + 0.5) / n

    def inside(box):
        return (cx >= box.x) & (cx < box.x + box.w) & (cy >= box.y) & (cy < box.y + box.h)

    in_a, in_b = inside(a), inside(b)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union


class TestBoxIou:
    def test_identical_is_one(self):
        box = Box(0.2, 0.3, 0.4, 0.3)
        assert box_iou(box, box) == 1.0

    def test_disjoint_is_zero(self):
        assert box_iou(Box(0, 0, 0.2, 0.2), Box(0.5, 0.5, 0.2, 0.2)) == 0.0

    def test_quarter_overlap_matches_grid_oracle(self):
        a = Box(0.0, 0.0, 0.5, 0.5)
        b = Box(0.25, 0.25, 0.5, 0.5)
        value = box_iou(a, b)
        assert value == pytest.approx(0.0625 / 0.4375, abs=1e-12)
        assert value == pytest.approx(_grid_iou(a, b), abs=1e-9)

    def test_symmetry_random(self, rng):
        for _ in range(200):
            a, b = random_box(rng), random_box(rng)
            assert box_iou(a, b) == box_iou(b, a)
            assert 0.0 <= box_iou(a, b) <= 1.0


class TestRle:
    def test_all_zero(self):
        mask = rle_encode(np.zeros((4, 4), dtype=np.uint8))
        assert mask.runs == (16,)
        assert mask.foreground == 0

    def test_all_one(self):
        mask = rle_encode(np.ones((4, 4), dtype=np.uint8))
        assert mask.runs == (0, 16)
        assert mask.foreground == 16

    def test_roundtrip_random_masks(self, rng):
        for _ in range(1000):
            h = int(rng.integers(1, 12))
            w = int(rng.integers(1, 12))
            bitmap = (rng.random((h, w)) > rng.random()).astype(np.uint8)
            decoded = rle_decode(rle_encode(bitmap))
            assert np.array_equal(decoded, bitmap)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            RleMask(width=4, height=4, runs=(3, 2))

    def test_json_roundtrip(self):
        mask = rle_encode(np.eye(5, dtype=np.uint8))
        assert RleMask.from_json(mask.to_json()) == mask


class TestRaster:
    def test_shapes(self, rng):
        Raster(rng.integers(0, 255, size=(5, 7), dtype=np.uint8))
        Raster(rng.integers(0, 255, size=(5, 7, 3), dtype=np.uint8))
        with pytest.raises(ValueError):
            Raster(np.zeros((5, 7, 4), dtype=np.uint8))

    def test_immutable(self, rng):
        raster = Raster(rng.integers(0, 255, size=(5, 7), dtype=np.uint8))
        with pytest.raises((ValueError, AttributeError)):
            raster.pixels[0, 0] = 3

    def test_png_roundtrip(self, tmp_path, rng):
        for shape in [(9, 11), (9, 11, 3)]:
            raster = Raster(rng.integers(0, 256, size=shape, dtype=np.uint8))
            path = tmp_path / f"r{len(shape)}.png"
            raster.save_png(path)
            assert Raster.load_png(path) == raster

    def test_label_png_roundtrip(self, tmp_path, rng):
        labels = rng.integers(0, 12, size=(6, 6)).astype(np.uint8)
        labels[0, 0] = 255
        path = tmp_path / "labels.png"
        save_label_png(path, labels)
        assert np.array_equal(load_label_png(path), labels)


class TestCrop:
    def test_identity(self, rng):
        raster = Raster(rng.integers(0, 256, size=(20, 30, 3), dtype=np.uint8))
        assert crop(raster, Box(0, 0, 1, 1)) == raster

    def test_exact_quadrant(self, rng):
        raster = Raster(rng.integers(0, 256, size=(100, 100), dtype=np.uint8))
        region = crop(raster, Box(0, 0, 0.5, 0.5))
        assert np.array_equal(region.pixels, raster.pixels[:50, :50])

    def test_offset_crop_pixel_arithmetic(self, rng):
        raster = Raster(rng.integers(0, 256, size=(100, 100, 3), dtype=np.uint8))
        region = crop(raster, Box(0.1, 0.1, 0.33, 0.33))
        assert (region.width, region.height) == (33, 33)
        assert np.array_equal(region.pixels, raster.pixels[10:43, 10:43])

    def test_degenerate_promotes_to_one_pixel(self, rng):
        raster = Raster(rng.integers(0, 256, size=(10, 10), dtype=np.uint8))
        region = crop(raster, Box(0.99, 0.99, 1e-6, 1e-6))
        assert (region.width, region.height) == (1, 1)


class TestVocabulary:
    def test_basic(self):
        vocab = Vocabulary.from_list(["car", "person", "bike"])
        assert vocab.size == 3
        assert vocab.index_of("Person ") == 1
        assert vocab.index_of("dog") is None

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError):
            Vocabulary.from_list(["car", "Car"])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            Vocabulary.from_list([])

    def test_load(self, tmp_path):
        path = tmp_path / "vocab.txt"
        path.write_text("car\n# comment\nperson\n\nbike\n")
        assert Vocabulary.load(path).classes == ("car", "person", "bike")
