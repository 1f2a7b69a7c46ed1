import numpy as np
import pytest
from PIL import Image

from openrgbt.core import Raster, save_label_png
from openrgbt.datasets import (
    DatasetConfig,
    LabelMapping,
    LoadStats,
    load_dataset,
    load_generic_layout,
    load_mfnet_layout,
    load_pst900_layout,
    remap,
)


def write_composite(path, rng, size=(12, 10)):
    """4-channel image: RGB plus thermal in the alpha plane."""
    h, w = size
    data = rng.integers(0, 256, size=(h, w, 4), dtype=np.uint8)
    Image.fromarray(data, mode="RGBA").save(path)
    return data


def make_mfnet_tree(root, rng, ids, missing_label=(), split="train"):
    (root / "images").mkdir(parents=True)
    (root / "labels").mkdir()
    for sample_id in ids:
        write_composite(root / "images" / f"{sample_id}.png", rng)
        if sample_id not in missing_label:
            save_label_png(
                root / "labels" / f"{sample_id}.png",
                rng.integers(0, 5, size=(12, 10)).astype(np.uint8),
            )
    (root / f"{split}.txt").write_text("".join(f"{i}\n" for i in ids))


def make_pst900_tree(root, rng, ids, missing_thermal=(), split="test"):
    base = root / split
    for sub in ("rgb", "thermal", "labels"):
        (base / sub).mkdir(parents=True)
    for sample_id in ids:
        Raster(rng.integers(0, 256, size=(8, 9, 3), dtype=np.uint8)).save_png(
            base / "rgb" / f"{sample_id}.png"
        )
        if sample_id not in missing_thermal:
            Raster(rng.integers(0, 256, size=(8, 9), dtype=np.uint8)).save_png(
                base / "thermal" / f"{sample_id}.png"
            )
        save_label_png(
            base / "labels" / f"{sample_id}.png",
            rng.integers(0, 3, size=(8, 9)).astype(np.uint8),
        )


class TestMfnetLayout:
    def test_empty_split(self, tmp_path, rng):
        make_mfnet_tree(tmp_path, rng, ids=[])
        assert list(load_mfnet_layout(tmp_path, "train")) == []

    def test_single_sample(self, tmp_path, rng):
        make_mfnet_tree(tmp_path, rng, ids=["00001D"])
        samples = list(load_mfnet_layout(tmp_path, "train"))
        assert len(samples) == 1
        sample = samples[0]
        assert sample.pair.rgb.channels == 3
        assert sample.pair.thermal.channels == 1
        assert sample.gt is not None
        assert sample.split == "train"

    def test_composite_splits_into_rgb_and_thermal(self, tmp_path, rng):
        (tmp_path / "images").mkdir()
        (tmp_path / "labels").mkdir()
        data = write_composite(tmp_path / "images" / "a.png", rng)
        save_label_png(tmp_path / "labels" / "a.png", np.zeros((12, 10), dtype=np.uint8))
        (tmp_path / "train.txt").write_text("a\n")
        sample = next(load_mfnet_layout(tmp_path, "train"))
        assert np.array_equal(sample.pair.rgb.pixels, data[:, :, :3])
        assert np.array_equal(sample.pair.thermal.pixels, data[:, :, 3])

    def test_missing_label_skipped_and_counted(self, tmp_path, rng):
        ids = [f"{i:05d}" for i in range(5)]
        make_mfnet_tree(tmp_path, rng, ids=ids, missing_label=["00002"])
        stats = LoadStats()
        samples = list(load_mfnet_layout(tmp_path, "train", stats=stats))
        assert len(samples) == 4
        assert stats.skipped == 1
        assert all(s.gt is not None for s in samples)

    def test_lexicographic_order(self, tmp_path, rng):
        ids = ["b", "a", "c"]
        make_mfnet_tree(tmp_path, rng, ids=ids)
        got = [s.pair.id for s in load_mfnet_layout(tmp_path, "train")]
        assert got == ["a", "b", "c"]

    def test_missing_split_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            list(load_mfnet_layout(tmp_path, "val"))


class TestPst900Layout:
    def test_basic(self, tmp_path, rng):
        make_pst900_tree(tmp_path, rng, ids=["x1", "x2"])
        samples = list(load_pst900_layout(tmp_path, "test"))
        assert [s.pair.id for s in samples] == ["x1", "x2"]

    def test_missing_thermal_skipped(self, tmp_path, rng):
        make_pst900_tree(tmp_path, rng, ids=["x1", "x2", "x3"], missing_thermal=["x2"])
        stats = LoadStats()
        samples = list(load_pst900_layout(tmp_path, "test", stats=stats))
        assert [s.pair.id for s in samples] == ["x1", "x3"]
        assert stats.skipped == 1


class TestGenericLayout:
    def test_labels_optional(self, tmp_path, rng):
        for sub in ("rgb", "thermal"):
            (tmp_path / sub).mkdir()
        Raster(rng.integers(0, 256, size=(6, 6, 3), dtype=np.uint8)).save_png(
            tmp_path / "rgb" / "s.png"
        )
        Raster(rng.integers(0, 256, size=(6, 6), dtype=np.uint8)).save_png(
            tmp_path / "thermal" / "s.png"
        )
        samples = list(load_generic_layout(tmp_path))
        assert len(samples) == 1
        assert samples[0].gt is None


class TestRemap:
    def test_identity(self, rng):
        gt = rng.integers(0, 8, size=(6, 6)).astype(np.uint8)
        assert np.array_equal(remap(gt, LabelMapping.identity(8)), gt)

    def test_everything_to_ignore(self, rng):
        gt = rng.integers(0, 4, size=(6, 6)).astype(np.uint8)
        mapping = LabelMapping({i: None for i in range(4)})
        assert np.all(remap(gt, mapping, ignore_index=255) == 255)

    def test_restriction_matches_per_pixel_oracle(self, rng):
        # 9 dataset classes restricted to three; everything else ignored.
        mapping = LabelMapping({1: 0, 2: 1, 3: 2})
        gt = rng.integers(0, 9, size=(16, 16)).astype(np.uint8)
        got = remap(gt, mapping, ignore_index=255)
        table = {1: 0, 2: 1, 3: 2}
        for g, r in zip(gt.ravel(), got.ravel()):
            assert r == table.get(int(g), 255)

    def test_idempotent_when_mapping_is(self, rng):
        mapping = LabelMapping({0: 0, 1: 1, 2: 2})
        gt = rng.integers(0, 3, size=(5, 5)).astype(np.uint8)
        once = remap(gt, mapping)
        assert np.array_equal(remap(once, mapping), once)


class TestDatasetConfig:
    def test_from_json_and_conditions(self, tmp_path, rng):
        make_mfnet_tree(tmp_path / "data", rng, ids=["a", "b"])
        (tmp_path / "cond.csv").write_text("id,condition\na,day\nb,night\n")
        config = DatasetConfig.from_json(
            {
                "layout": "mfnet",
                "root": str(tmp_path / "data"),
                "split": "train",
                "mapping": {"0": 0, "1": 1, "2": None, "3": None, "4": None},
                "conditions_csv": str(tmp_path / "cond.csv"),
            }
        )
        samples = list(load_dataset(config))
        assert [s.condition for s in samples] == ["day", "night"]
        for s in samples:
            assert set(np.unique(s.gt)) <= {0, 1, 255}

    def test_unknown_layout_rejected(self):
        with pytest.raises(ValueError):
            DatasetConfig(layout="voc", root="/nowhere")
