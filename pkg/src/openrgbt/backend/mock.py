"""Deterministic mock backends driven by synthetic scene descriptions.

A :class:`MockScene` plants colored rectangles with known classes on a
flat background and renders the visible/thermal pair, the ground-truth
label map, and every backend response from the same geometry, so an
end-to-end run against uncorrupted mocks reproduces the ground truth
exactly. Corruption knobs (miss rate, label-flip rate) model text-prompt
detector failures; the exemplar-prompt path always returns planted
geometry verbatim.

All randomness is drawn from ``numpy`` generators seeded by the scene
seed, so identical scene + seed means byte-identical responses.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..core import VOID_LABEL, Box, Raster, Vocabulary, rle_encode
from ..fusion import ImagePair
from .base import Exemplar, RawDetection, SegmentResult
from .pe import sine_cosine_pe
from .protocol import (
    CAP_DETECT_TEXT,
    CAP_DETECT_VISUAL,
    CAP_EMBED_CROPS,
    CAP_EMBED_TEXTS,
    CAP_FUSION_WEIGHTS,
    CAP_SEGMENT,
)

DEFAULT_EMBEDDING_DIM = 32
DEFAULT_MARGIN = 0.3

# Sub-seed offsets so each mock op draws from its own stream.
_STREAM_TEXT = 1
_STREAM_SCORE = 2

MOCK_CAPABILITIES = (
    CAP_DETECT_TEXT,
    CAP_DETECT_VISUAL,
    CAP_EMBED_TEXTS,
    CAP_EMBED_CROPS,
    CAP_SEGMENT,
    CAP_FUSION_WEIGHTS,
)


def _norm(name: str) -> str:
    return name.strip().lower()


@dataclass(frozen=True)
class PlantedObject:
    box: Box
    class_name: str
    fill_rgb: tuple[int, int, int]
    thermal_intensity: int

    def pixel_rect(self, width: int, height: int) -> tuple[int, int, int, int]:
        return self.box.to_pixels(width, height)


@dataclass(frozen=True)
class MockScene:
    id: str
    width: int
    height: int
    objects: tuple[PlantedObject, ...]
    classes: tuple[str, ...] = ()
    exemplar_only: tuple[str, ...] = ()
    background_rgb: tuple[int, int, int] = (16, 16, 16)
    background_thermal: int = 8
    miss_rate: float = 0.0
    label_flip_rate: float = 0.0
    seed: int = 0
    condition: str | None = None

    def __post_init__(self):
        if not self.classes:
            seen: list[str] = []
            for obj in self.objects:
                if obj.class_name not in seen:
                    seen.append(obj.class_name)
            for name in self.exemplar_only:
                if name not in seen:
                    seen.append(name)
            object.__setattr__(self, "classes", tuple(seen))
        for rate in (self.miss_rate, self.label_flip_rate):
            if not 0.0 <= rate <= 1.0:
                raise ValueError("corruption rates must lie in [0, 1]")

    # -- rendering ---------------------------------------------------------

    def render_pair(self) -> ImagePair:
        rgb = np.empty((self.height, self.width, 3), dtype=np.uint8)
        rgb[:] = np.asarray(self.background_rgb, dtype=np.uint8)
        thermal = np.full((self.height, self.width), self.background_thermal, dtype=np.uint8)
        for obj in self.objects:
            x0, y0, w, h = obj.pixel_rect(self.width, self.height)
            rgb[y0 : y0 + h, x0 : x0 + w] = np.asarray(obj.fill_rgb, dtype=np.uint8)
            thermal[y0 : y0 + h, x0 : x0 + w] = obj.thermal_intensity
        return ImagePair(rgb=Raster(rgb), thermal=Raster(thermal), id=self.id)

    def render_labels(self, vocab: Vocabulary) -> np.ndarray:
        labels = np.full((self.height, self.width), VOID_LABEL, dtype=np.uint8)
        for obj in self.objects:
            idx = vocab.index_of(obj.class_name)
            if idx is None:
                continue
            x0, y0, w, h = obj.pixel_rect(self.width, self.height)
            labels[y0 : y0 + h, x0 : x0 + w] = idx
        return labels

    def exemplars(self, image: Raster | None = None) -> list[Exemplar]:
        """One exemplar per exemplar-only class, taken from the first
        planted object of that class."""
        out: list[Exemplar] = []
        seen: set[str] = set()
        wanted = {_norm(n) for n in self.exemplar_only}
        for obj in self.objects:
            key = _norm(obj.class_name)
            if key in wanted and key not in seen:
                out.append(Exemplar(class_name=obj.class_name, box=obj.box, image=image))
                seen.add(key)
        return out

    # -- persistence -------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "width": self.width,
            "height": self.height,
            "classes": list(self.classes),
            "exemplar_only": list(self.exemplar_only),
            "background_rgb": list(self.background_rgb),
            "background_thermal": self.background_thermal,
            "miss_rate": self.miss_rate,
            "label_flip_rate": self.label_flip_rate,
            "seed": self.seed,
            "condition": self.condition,
            "objects": [
                {
                    "box": obj.box.to_list(),
                    "class": obj.class_name,
                    "fill_rgb": list(obj.fill_rgb),
                    "thermal_intensity": obj.thermal_intensity,
                }
                for obj in self.objects
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MockScene":
        objects = tuple(
            PlantedObject(
                box=Box.from_list(item["box"]),
                class_name=str(item["class"]),
                fill_rgb=tuple(int(v) for v in item["fill_rgb"]),
                thermal_intensity=int(item["thermal_intensity"]),
            )
            for item in obj["objects"]
        )
        return cls(
            id=str(obj["id"]),
            width=int(obj["width"]),
            height=int(obj["height"]),
            objects=objects,
            classes=tuple(str(c) for c in obj.get("classes", ())),
            exemplar_only=tuple(str(c) for c in obj.get("exemplar_only", ())),
            background_rgb=tuple(int(v) for v in obj.get("background_rgb", (16, 16, 16))),
            background_thermal=int(obj.get("background_thermal", 8)),
            miss_rate=float(obj.get("miss_rate", 0.0)),
            label_flip_rate=float(obj.get("label_flip_rate", 0.0)),
            seed=int(obj.get("seed", 0)),
            condition=obj.get("condition"),
        )

    @classmethod
    def load(cls, path) -> "MockScene":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), indent=2, sort_keys=True), encoding="utf-8"
        )


def _best_overlap(scene: MockScene, box: Box) -> PlantedObject | None:
    """Planted object with the largest pixel intersection with the box."""
    x0, y0, w, h = box.to_pixels(scene.width, scene.height)
    best, best_area = None, 0
    for obj in scene.objects:
        ox, oy, ow, oh = obj.pixel_rect(scene.width, scene.height)
        iw = min(x0 + w, ox + ow) - max(x0, ox)
        ih = min(y0 + h, oy + oh) - max(y0, oy)
        area = iw * ih if iw > 0 and ih > 0 else 0
        if area > best_area:
            best, best_area = obj, area
    return best


class MockTextDetector:
    """Returns planted boxes for prompted classes, with seeded corruption.

    Per planted object the generator always draws (miss, flip, flip target,
    score) in that order, so the corruption pattern for a given scene seed
    is stable no matter which knobs are active. Classes listed in the
    scene's ``exemplar_only`` are never returned: they model categories the
    text prompt cannot reach.
    """

    def __init__(self, scene: MockScene):
        self.scene = scene

    def detect_text(self, image: Raster, class_names: Sequence[str]) -> list[RawDetection]:
        scene = self.scene
        rng = np.random.default_rng([scene.seed, _STREAM_TEXT])
        prompted = {_norm(n): n for n in class_names}
        blocked = {_norm(n) for n in scene.exemplar_only}
        out: list[RawDetection] = []
        for obj in scene.objects:
            miss_u = rng.random()
            flip_u = rng.random()
            target_u = rng.random()
            score = 0.5 + 0.45 * rng.random()
            key = _norm(obj.class_name)
            if key not in prompted or key in blocked:
                continue
            if miss_u < scene.miss_rate:
                continue
            label = obj.class_name
            if flip_u < scene.label_flip_rate:
                others = [n for k, n in sorted(prompted.items()) if k != key]
                if others:
                    label = others[int(target_u * len(others)) % len(others)]
            out.append(RawDetection(box=obj.box, label=label, score=float(score)))
        return out


class MockVisualDetector:
    """Exemplar-prompt detection: aggregates the exemplar boxes' positional
    embeddings into one prompt vector per class and scores each planted
    object of that class by embedding similarity. No corruption."""

    def __init__(self, scene: MockScene, pe_dim: int = 32, pe_seed: int = 0):
        self.scene = scene
        self.pe_dim = pe_dim
        self.pe_seed = pe_seed

    def _embed_box(self, box: Box) -> np.ndarray:
        vec = sine_cosine_pe(box, self.pe_dim, project=True, seed=self.pe_seed)
        return vec / np.linalg.norm(vec)

    def detect_visual(
        self, image: Raster, exemplars: Sequence[Exemplar]
    ) -> list[RawDetection]:
        prompts: dict[str, list[np.ndarray]] = {}
        display: dict[str, str] = {}
        for ex in exemplars:
            key = _norm(ex.class_name)
            prompts.setdefault(key, []).append(self._embed_box(ex.box))
            display.setdefault(key, ex.class_name)
        merged = {}
        for key, vecs in prompts.items():
            mean = np.mean(vecs, axis=0)
            merged[key] = mean / np.linalg.norm(mean)
        out: list[RawDetection] = []
        for obj in self.scene.objects:
            key = _norm(obj.class_name)
            prompt = merged.get(key)
            if prompt is None:
                continue
            similarity = float(np.dot(prompt, self._embed_box(obj.box)))
            score = 0.5 + 0.45 * max(0.0, similarity)
            out.append(RawDetection(box=obj.box, label=display[key], score=score))
        return out


class MockEmbedder:
    """Constructed embeddings with an exact similarity margin.

    Text embeddings of distinct classes have pairwise dot product
    ``1 - margin``; the embedding of a crop is the text embedding of the
    planted class best overlapping the crop's box, so its true-class dot is
    exactly 1. Crops overlapping nothing map to a background direction
    orthogonal to every class.
    """

    def __init__(
        self,
        scene: MockScene,
        classes: Sequence[str] | None = None,
        dim: int = DEFAULT_EMBEDDING_DIM,
        margin: float = DEFAULT_MARGIN,
    ):
        if not 0.0 < margin <= 1.0:
            raise ValueError("margin must lie in (0, 1]")
        names = list(classes) if classes is not None else list(scene.classes)
        extra = [c for c in scene.classes if _norm(c) not in {_norm(n) for n in names}]
        names.extend(extra)
        if dim < len(names) + 2:
            raise ValueError(
                f"embedding dim {dim} too small for {len(names)} classes; "
                f"need at least {len(names) + 2}"
            )
        self.scene = scene
        self.dim = dim
        self.margin = margin
        self._axes = {_norm(n): i + 1 for i, n in enumerate(names)}
        self._background_axis = len(names) + 1

    def _class_vector(self, axis: int) -> np.ndarray:
        vec = np.zeros(self.dim)
        vec[0] = math.sqrt(1.0 - self.margin)
        vec[axis] = math.sqrt(self.margin)
        return vec

    def _background_vector(self) -> np.ndarray:
        vec = np.zeros(self.dim)
        vec[self._background_axis] = 1.0
        return vec

    def _axis_for_text(self, text: str) -> int | None:
        key = _norm(text)
        axis = self._axes.get(key)
        if axis is not None:
            return axis
        # Prompt templates wrap the class name; fall back to substring match.
        for name, idx in self._axes.items():
            if name in key:
                return idx
        return None

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        rows = []
        for text in texts:
            axis = self._axis_for_text(text)
            rows.append(
                self._background_vector() if axis is None else self._class_vector(axis)
            )
        return np.asarray(rows, dtype=np.float64).reshape(len(rows), self.dim)

    def embed_boxes(self, image: Raster, boxes: Sequence[Box]) -> np.ndarray:
        rows = []
        for box in boxes:
            obj = _best_overlap(self.scene, box)
            if obj is None:
                rows.append(self._background_vector())
            else:
                rows.append(self._class_vector(self._axes[_norm(obj.class_name)]))
        return np.asarray(rows, dtype=np.float64).reshape(len(rows), self.dim)


class MockSegmenter:
    """Mask = best-overlapping planted rectangle intersected with the box;
    caption names the planted class."""

    def __init__(self, scene: MockScene):
        self.scene = scene

    def segment(self, image: Raster, boxes: Sequence[Box]) -> list[SegmentResult]:
        scene = self.scene
        out: list[SegmentResult] = []
        for box in boxes:
            bitmap = np.zeros((scene.height, scene.width), dtype=np.uint8)
            caption = ""
            obj = _best_overlap(scene, box)
            if obj is not None:
                x0, y0, w, h = box.to_pixels(scene.width, scene.height)
                ox, oy, ow, oh = obj.pixel_rect(scene.width, scene.height)
                ix0, iy0 = max(x0, ox), max(y0, oy)
                ix1 = min(x0 + w, ox + ow)
                iy1 = min(y0 + h, oy + oh)
                if ix1 > ix0 and iy1 > iy0:
                    bitmap[iy0:iy1, ix0:ix1] = 1
                caption = f"a {obj.class_name}"
            out.append(SegmentResult(mask=rle_encode(bitmap), caption=caption))
        return out


class MockWeightProvider:
    """Serves the reference contrast-heuristic weights over the backend
    surface, for the fuse command's backend mode."""

    def __init__(self, window: int = 9):
        self.window = window

    def fusion_weights(self, rgb: Raster, thermal: Raster) -> np.ndarray:
        from ..fusion import reference_weights

        pair = ImagePair(rgb=rgb, thermal=thermal)
        return reference_weights(pair, self.window).weights


@dataclass
class MockBackendSet:
    """All capabilities for one scene, sharing geometry and seed."""

    text: MockTextDetector
    visual: MockVisualDetector
    embedder: MockEmbedder
    segmenter: MockSegmenter
    weights: MockWeightProvider
    embedding_dim: int
    capabilities: tuple[str, ...] = MOCK_CAPABILITIES

    @classmethod
    def for_scene(
        cls,
        scene: MockScene,
        classes: Sequence[str] | None = None,
        embedding_dim: int = DEFAULT_EMBEDDING_DIM,
        margin: float = DEFAULT_MARGIN,
    ) -> "MockBackendSet":
        return cls(
            text=MockTextDetector(scene),
            visual=MockVisualDetector(scene),
            embedder=MockEmbedder(scene, classes=classes, dim=embedding_dim, margin=margin),
            segmenter=MockSegmenter(scene),
            weights=MockWeightProvider(),
            embedding_dim=embedding_dim,
        )


# --------------------------------------------------------------------------
# Scene synthesis

DEFAULT_PALETTE = {
    "car": ((200, 40, 40), 180),
    "person": ((40, 200, 40), 220),
    "bike": ((40, 40, 200), 140),
    "cone": ((230, 140, 20), 90),
    "hydrant": ((200, 40, 200), 160),
    "bench": ((20, 200, 200), 60),
}


def _place_boxes(rng: np.random.Generator, count: int, width: int, height: int):
    """Rejection-sample axis-aligned boxes whose pixel rects keep a 2 px gap."""
    rects: list[tuple[int, int, int, int]] = []
    boxes: list[Box] = []
    attempts = 0
    while len(boxes) < count and attempts < 500:
        attempts += 1
        w = float(rng.uniform(0.12, 0.3))
        h = float(rng.uniform(0.12, 0.3))
        x = float(rng.uniform(0.02, 0.96 - w))
        y = float(rng.uniform(0.02, 0.96 - h))
        box = Box(x, y, w, h)
        px, py, pw, ph = box.to_pixels(width, height)
        clear = all(
            px + pw + 2 <= ox or ox + ow + 2 <= px or py + ph + 2 <= oy or oy + oh + 2 <= py
            for ox, oy, ow, oh in rects
        )
        if clear:
            rects.append((px, py, pw, ph))
            boxes.append(box)
    return boxes


def generate_scene(
    scene_id: str,
    seed: int,
    classes: Sequence[str],
    exemplar_only: Sequence[str] = (),
    width: int = 96,
    height: int = 96,
    min_objects: int = 2,
    max_objects: int = 4,
    miss_rate: float = 0.0,
    label_flip_rate: float = 0.0,
    condition: str | None = None,
    palette: dict | None = None,
) -> MockScene:
    """Build one scene: non-overlapping rectangles, at least one object per
    exemplar-only class and at least one text-reachable object."""
    palette = palette or DEFAULT_PALETTE
    rng = np.random.default_rng([seed, 17])
    text_classes = [c for c in classes if c not in exemplar_only]
    if not text_classes:
        raise ValueError("at least one class must be reachable by text prompts")
    n_extra = int(rng.integers(min_objects, max_objects + 1))
    wanted = list(exemplar_only)
    wanted.append(text_classes[int(rng.integers(0, len(text_classes)))])
    for _ in range(n_extra):
        wanted.append(text_classes[int(rng.integers(0, len(text_classes)))])
    boxes = _place_boxes(rng, len(wanted), width, height)
    objects = []
    for name, box in zip(wanted, boxes):
        fill, heat = palette.get(name, ((128, 128, 128), 128))
        objects.append(
            PlantedObject(box=box, class_name=name, fill_rgb=fill, thermal_intensity=heat)
        )
    return MockScene(
        id=scene_id,
        width=width,
        height=height,
        objects=tuple(objects),
        classes=tuple(classes),
        exemplar_only=tuple(exemplar_only),
        miss_rate=miss_rate,
        label_flip_rate=label_flip_rate,
        seed=seed,
        condition=condition,
    )


def generate_scene_suite(
    out_dir,
    count: int,
    seed: int,
    classes: Sequence[str] | None = None,
    exemplar_only: Sequence[str] = (),
    conditions: Sequence[str] = (),
    **scene_kwargs,
) -> list[MockScene]:
    """Write ``count`` scene JSON files plus a vocabulary file to a
    directory; returns the scenes in id order."""
    classes = list(classes) if classes is not None else list(DEFAULT_PALETTE)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenes = []
    for i in range(count):
        condition = conditions[i % len(conditions)] if conditions else None
        scene = generate_scene(
            scene_id=f"scene_{i:04d}",
            seed=seed * 100003 + i,
            classes=classes,
            exemplar_only=exemplar_only,
            condition=condition,
            **scene_kwargs,
        )
        scene.save(out / f"{scene.id}.json")
        scenes.append(scene)
    (out / "vocab.txt").write_text("".join(f"{c}\n" for c in classes), encoding="utf-8")
    return scenes


def load_scene_dir(scene_dir) -> list[MockScene]:
    paths = sorted(Path(scene_dir).glob("*.json"))
    if not paths:
        raise FileNotFoundError(f"no scene JSON files under {scene_dir}")
    return [MockScene.load(p) for p in paths]
