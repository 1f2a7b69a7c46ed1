"""Directory-layout loaders for paired visible/thermal datasets.

Three layouts are supported:

* ``mfnet``:   ``images/<id>.png`` holds a 4-channel composite (RGB +
  thermal in the alpha plane), ``labels/<id>.png`` the class indices, and
  ``<split>.txt`` the sample ids.
* ``pst900``:  ``<split>/rgb/<id>.png``, ``<split>/thermal/<id>.png``,
  ``<split>/labels/<id>.png``.
* ``generic``: ``rgb/``, ``thermal/`` and optionally ``labels/`` directly
  under the root; ids are the rgb file stems.

Samples stream in lexicographic id order; ids with missing files are
skipped and counted. An optional ``id,condition`` CSV supplies per-sample
condition tags, and a label mapping narrows dataset classes to the active
vocabulary (unmapped classes become the ignore index).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from .core import Raster, load_label_png
from .fusion import ImagePair

logger = logging.getLogger(__name__)

DEFAULT_IGNORE = 255


@dataclass(frozen=True)
class DatasetSample:
    pair: ImagePair
    gt: np.ndarray | None = None
    condition: str | None = None
    split: str = ""

    def __post_init__(self):
        if self.gt is not None:
            if self.gt.shape != (self.pair.height, self.pair.width):
                raise ValueError(
                    f"label shape {self.gt.shape} does not match image "
                    f"{self.pair.height}x{self.pair.width}"
                )


@dataclass
class LoadStats:
    skipped: int = 0
    reasons: list[str] = field(default_factory=list)

    def skip(self, reason: str):
        self.skipped += 1
        self.reasons.append(reason)
        logger.warning("skipping sample: %s", reason)


@dataclass(frozen=True)
class LabelMapping:
    """Total mapping from dataset class index to vocabulary index; ``None``
    targets (and indices outside the mapping) become the ignore value."""

    mapping: dict[int, int | None]

    def lut(self, ignore_index: int = DEFAULT_IGNORE) -> np.ndarray:
        table = np.full(256, ignore_index, dtype=np.int64)
        for src, dst in self.mapping.items():
            if not 0 <= src <= 255:
                raise ValueError(f"dataset class index {src} outside 0..255")
            table[src] = ignore_index if dst is None else int(dst)
        return table

    @classmethod
    def identity(cls, n_classes: int) -> "LabelMapping":
        return cls({i: i for i in range(n_classes)})

    @classmethod
    def from_json(cls, obj: dict) -> "LabelMapping":
        return cls({int(k): (None if v is None else int(v)) for k, v in obj.items()})


def remap(gt: np.ndarray, mapping: LabelMapping, ignore_index: int = DEFAULT_IGNORE) -> np.ndarray:
    """Rewrite dataset label indices into vocabulary indices."""
    lut = mapping.lut(ignore_index)
    return lut[np.asarray(gt, dtype=np.int64)].astype(np.uint8)


def _load_conditions(path) -> dict[str, str]:
    tags: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        sample_id, _, tag = line.partition(",")
        if sample_id.strip().lower() == "id":
            continue
        if tag:
            tags[sample_id.strip()] = tag.strip()
    return tags


def load_mfnet_layout(
    root, split: str, stats: LoadStats | None = None
) -> Iterator[DatasetSample]:
    """Stream samples from a 4-channel-composite layout."""
    root = Path(root)
    stats = stats if stats is not None else LoadStats()
    split_file = root / f"{split}.txt"
    if not split_file.is_file():
        raise FileNotFoundError(f"split list not found: {split_file}")
    ids = sorted(
        line.strip()
        for line in split_file.read_text(encoding="utf-8").splitlines()
        if line.strip()
    )
    for sample_id in ids:
        image_path = root / "images" / f"{sample_id}.png"
        label_path = root / "labels" / f"{sample_id}.png"
        if not image_path.is_file():
            stats.skip(f"{sample_id}: missing {image_path}")
            continue
        if not label_path.is_file():
            stats.skip(f"{sample_id}: missing {label_path}")
            continue
        with Image.open(image_path) as img:
            composite = np.asarray(img)
        if composite.ndim != 3 or composite.shape[2] != 4:
            stats.skip(f"{sample_id}: expected a 4-channel composite image")
            continue
        try:
            pair = ImagePair(
                rgb=Raster(composite[:, :, :3]),
                thermal=Raster(composite[:, :, 3]),
                id=sample_id,
            )
            yield DatasetSample(pair=pair, gt=load_label_png(label_path), split=split)
        except ValueError as exc:
            stats.skip(f"{sample_id}: {exc}")


def load_pst900_layout(
    root, split: str, stats: LoadStats | None = None
) -> Iterator[DatasetSample]:
    """Stream samples from separate rgb/thermal/labels directories under a
    split directory."""
    base = Path(root) / split
    stats = stats if stats is not None else LoadStats()
    rgb_dir = base / "rgb"
    if not rgb_dir.is_dir():
        raise FileNotFoundError(f"rgb directory not found: {rgb_dir}")
    for rgb_path in sorted(rgb_dir.glob("*.png")):
        sample_id = rgb_path.stem
        thermal_path = base / "thermal" / rgb_path.name
        label_path = base / "labels" / rgb_path.name
        if not thermal_path.is_file():
            stats.skip(f"{sample_id}: missing {thermal_path}")
            continue
        if not label_path.is_file():
            stats.skip(f"{sample_id}: missing {label_path}")
            continue
        rgb = Raster.load_png(rgb_path)
        thermal = Raster.load_png(thermal_path)
        try:
            pair = ImagePair(rgb=rgb, thermal=thermal, id=sample_id)
            yield DatasetSample(pair=pair, gt=load_label_png(label_path), split=split)
        except ValueError as exc:
            stats.skip(f"{sample_id}: {exc}")


def load_generic_layout(
    root, split: str = "", stats: LoadStats | None = None
) -> Iterator[DatasetSample]:
    """Stream samples from flat rgb/thermal(/labels) directories; labels are
    optional for inference-only datasets."""
    base = Path(root)
    stats = stats if stats is not None else LoadStats()
    rgb_dir = base / "rgb"
    labels_dir = base / "labels"
    have_labels = labels_dir.is_dir()
    if not rgb_dir.is_dir():
        raise FileNotFoundError(f"rgb directory not found: {rgb_dir}")
    for rgb_path in sorted(rgb_dir.glob("*.png")):
        sample_id = rgb_path.stem
        thermal_path = base / "thermal" / rgb_path.name
        if not thermal_path.is_file():
            stats.skip(f"{sample_id}: missing {thermal_path}")
            continue
        gt = None
        if have_labels:
            label_path = labels_dir / rgb_path.name
            if not label_path.is_file():
                stats.skip(f"{sample_id}: missing {label_path}")
                continue
            gt = load_label_png(label_path)
        try:
            pair = ImagePair(
                rgb=Raster.load_png(rgb_path),
                thermal=Raster.load_png(thermal_path),
                id=sample_id,
            )
            yield DatasetSample(pair=pair, gt=gt, split=split)
        except ValueError as exc:
            stats.skip(f"{sample_id}: {exc}")


_LAYOUTS = {
    "mfnet": load_mfnet_layout,
    "pst900": load_pst900_layout,
    "generic": load_generic_layout,
}


@dataclass(frozen=True)
class DatasetConfig:
    """JSON-configurable dataset source:
    ``{layout, root, split, mapping, conditions_csv}``."""

    layout: str
    root: str
    split: str = ""
    mapping: LabelMapping | None = None
    conditions_csv: str | None = None

    def __post_init__(self):
        if self.layout not in _LAYOUTS:
            raise ValueError(
                f"unknown layout {self.layout!r}; expected one of {sorted(_LAYOUTS)}"
            )

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetConfig":
        mapping = obj.get("mapping")
        return cls(
            layout=str(obj["layout"]),
            root=str(obj["root"]),
            split=str(obj.get("split", "")),
            mapping=None if mapping is None else LabelMapping.from_json(mapping),
            conditions_csv=obj.get("conditions_csv"),
        )

    @classmethod
    def load(cls, path) -> "DatasetConfig":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def load_dataset(
    config: DatasetConfig,
    ignore_index: int = DEFAULT_IGNORE,
    stats: LoadStats | None = None,
) -> Iterator[DatasetSample]:
    """Stream a configured dataset with mapping and condition tags applied."""
    loader = _LAYOUTS[config.layout]
    conditions = (
        _load_conditions(config.conditions_csv) if config.conditions_csv else {}
    )
    for sample in loader(config.root, config.split, stats=stats):
        gt = sample.gt
        if gt is not None and config.mapping is not None:
            gt = remap(gt, config.mapping, ignore_index)
        condition = conditions.get(sample.pair.id, sample.condition)
        yield DatasetSample(pair=sample.pair, gt=gt, condition=condition, split=sample.split)
