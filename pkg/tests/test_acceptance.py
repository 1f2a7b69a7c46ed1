"""Acceptance suite: every release criterion at its stated tolerance.

Each test prints one ``acceptance: <name>: PASS|FAIL`` line (visible with
``pytest tests/test_acceptance.py -s``); the assertions carry the
tolerances. Run order is independent.
"""

import contextlib
import json
import time
from pathlib import Path

import numpy as np
import pytest

from openrgbt.backend.mock import MockTextDetector, generate_scene_suite, load_scene_dir
from openrgbt.core import Box, Raster, Vocabulary
from openrgbt.fusion import ImagePair, WeightMap, fuse
from openrgbt.metrics import confusion, macc, miou
from openrgbt.pipeline import PipelineConfig, ablate, run
from openrgbt.prompting import DetectionProposal
from openrgbt.sccm import (
    ConfidenceMatrix,
    SccmConfig,
    confidence_from_scores,
    confidence_matrix,
    correct_labels,
    predicted_label,
)

from test_metrics import brute_confusion, brute_scores
from test_protocol import random_request, random_result

CLASSES = ["car", "person", "bike", "cone"]


@contextlib.contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"acceptance: {name}: FAIL")
        raise
    print(f"acceptance: {name}: PASS")


def mock_config(scene_dir, out_dir, **overrides) -> PipelineConfig:
    obj = {
        "vocab_file": str(Path(scene_dir) / "vocab.txt"),
        "backends": f"mock:{scene_dir}",
        "output_dir": str(out_dir),
        "sccm": {"enabled": True, "th1": 0.1, "th2": 0.3, "temperature": 10.0},
        "visual_prompts": {"enabled": True},
        "mock": {"margin": 0.3},
        "seed": 0,
    }
    obj.update(overrides)
    return PipelineConfig.from_json(obj)


def test_confidence_row_mass():
    """Row mass equals S/(1+S) < 1, to 1e-9, over 1000 random embedding sets."""
    with criterion("confidence row mass"):
        rng = np.random.default_rng(1)
        cfg = SccmConfig(temperature=10.0)
        start = time.perf_counter()
        for _ in range(1000):
            n = int(rng.integers(1, 21))
            k = int(rng.integers(1, 31))
            d = int(rng.integers(4, 33))
            visual = rng.standard_normal((n, d))
            text = rng.standard_normal((k, d))
            matrix = confidence_matrix(visual, text, cfg)
            vn = visual / np.linalg.norm(visual, axis=1, keepdims=True)
            tn = text / np.linalg.norm(text, axis=1, keepdims=True)
            s = np.exp(cfg.temperature * vn @ tn.T).sum(axis=1)
            sums = matrix.values.sum(axis=1)
            assert np.all(sums < 1.0)
            assert np.max(np.abs(sums - s / (1.0 + s))) < 1e-9
        elapsed = time.perf_counter() - start
        assert elapsed < 5.0, f"row-mass check took {elapsed:.2f}s"


def test_single_class_sigmoid():
    """K=1 reduces the confidence to the logistic function, to 1e-12."""
    with criterion("single-class sigmoid equivalence"):
        rng = np.random.default_rng(2)
        cfg = SccmConfig(normalize_embeddings=False, temperature=1.0)
        for _ in range(1000):
            s = float(rng.uniform(-30.0, 30.0))
            matrix = confidence_matrix(np.array([[s]]), np.array([[1.0]]), cfg)
            expected = 1.0 / (1.0 + np.exp(-s))
            assert abs(matrix.values[0, 0] - expected) < 1e-12


def test_argmax_shift_invariance():
    """Adding a constant to a row never moves the predicted class (500x)."""
    with criterion("argmax shift invariance"):
        rng = np.random.default_rng(3)
        for _ in range(500):
            k = int(rng.integers(2, 31))
            scores = rng.standard_normal((1, k)) * 5.0
            shift = float(rng.uniform(-100.0, 100.0))
            a = predicted_label(confidence_from_scores(scores).values[0])[0]
            b = predicted_label(confidence_from_scores(scores + shift).values[0])[0]
            assert a == b


def test_threshold_monotonicity():
    """The relabeled set shrinks weakly as either threshold grows (500x)."""
    with criterion("threshold monotonicity"):
        rng = np.random.default_rng(4)
        for _ in range(500):
            n = int(rng.integers(1, 12))
            k = int(rng.integers(2, 8))
            matrix = confidence_from_scores(rng.standard_normal((n, k)) * 2.0)
            proposals = [
                DetectionProposal(
                    box=Box(0.1, 0.1, 0.2, 0.2),
                    class_id=int(rng.integers(0, k)),
                    score=0.9,
                    source="text",
                    initial_class_id=int(rng.integers(0, k)),
                )
                for _ in range(n)
            ]

            def relabeled(th1, th2):
                out, _ = correct_labels(proposals, matrix, SccmConfig(th1=th1, th2=th2))
                return {
                    i for i, (p, q) in enumerate(zip(proposals, out)) if p.class_id != q.class_id
                }

            th1 = float(rng.uniform(0.0, 0.5))
            th2 = float(rng.uniform(0.05, 0.6))
            base = relabeled(th1, th2)
            assert relabeled(th1 + float(rng.uniform(0.01, 0.4)), th2) <= base
            assert relabeled(th1, min(0.99, th2 + float(rng.uniform(0.01, 0.35)))) <= base


def test_relabel_branch_table():
    """Only the (margin ok, floor ok) cell relabels; the other three keep."""
    with criterion("relabel branch table"):
        cfg = SccmConfig(th1=0.3, th2=0.5)
        cases = [
            (0.70, 0.10, True),   # margin >= th1, f_pr >= th2
            (0.45, 0.10, False),  # margin >= th1, f_pr <  th2
            (0.60, 0.35, False),  # margin <  th1, f_pr >= th2
            (0.40, 0.35, False),  # margin <  th1, f_pr <  th2
        ]
        for f_pr, f_in, expect in cases:
            row = np.array([[f_in, f_pr, 0.004]])
            proposal = DetectionProposal(Box(0.1, 0.1, 0.2, 0.2), 0, 0.9, "text", 0)
            out, _ = correct_labels([proposal], ConfidenceMatrix(row, 1.0), cfg)
            assert (out[0].class_id == 1) == expect, (f_pr, f_in)


def test_metrics_match_brute_force():
    """Counts exactly, score ratios to 1e-9, on 200 random map pairs; the
    worked 2x2 example is pinned."""
    with criterion("metrics oracle equivalence"):
        rng = np.random.default_rng(5)
        for _ in range(200):
            k = int(rng.integers(1, 6))
            gt = rng.integers(0, k, size=(16, 16)).astype(np.int64)
            gt[rng.random((16, 16)) < 0.15] = 255
            pred = rng.integers(0, k, size=(16, 16)).astype(np.int64)
            pred[rng.random((16, 16)) < 0.1] = 255
            cm = confusion(pred, gt, k, ignore_index=255)
            assert np.array_equal(cm.counts, brute_confusion(pred, gt, k, 255))
            want_iou, want_acc = brute_scores(cm.counts)
            _, got_iou = miou(cm)
            _, got_acc = macc(cm)
            if np.isnan(want_iou):
                assert np.isnan(got_iou)
            else:
                assert abs(got_iou - want_iou) < 1e-9
                assert abs(got_acc - want_acc) < 1e-9
        # Pinned regression: 2x2 maps with one error.
        cm = confusion(np.array([[1, 0], [0, 0]]), np.array([[1, 1], [0, 0]]), 2)
        _, mean_iou = miou(cm)
        _, mean_acc = macc(cm)
        assert abs(mean_iou - 175.0 / 3.0) < 1e-9  # 58.333...
        assert mean_acc == 75.0


def test_fusion_convexity():
    """Fused values sit between the per-pixel modality extremes, within the
    8-bit rounding step, on 100 random pairs."""
    with criterion("fusion convexity"):
        rng = np.random.default_rng(6)
        for _ in range(100):
            h = int(rng.integers(2, 16))
            w = int(rng.integers(2, 16))
            rgb = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
            thermal = rng.integers(0, 256, size=(h, w), dtype=np.uint8)
            pair = ImagePair(rgb=Raster(rgb), thermal=Raster(thermal), id="x")
            fused = fuse(pair, WeightMap(rng.random((h, w)))).pixels.astype(np.int64)
            lo = np.minimum(rgb, thermal[:, :, None]).astype(np.int64)
            hi = np.maximum(rgb, thermal[:, :, None]).astype(np.int64)
            assert np.all(fused >= lo - 1) and np.all(fused <= hi + 1)


def test_end_to_end_mock_exactness_and_determinism(tmp_path):
    """25 uncorrupted scenes: mIoU exactly 100 and byte-identical reports
    across reruns and worker counts, in under 60 seconds."""
    with criterion("end-to-end mock determinism"):
        start = time.perf_counter()
        scene_dir = tmp_path / "scenes"
        generate_scene_suite(
            scene_dir, count=25, seed=100, classes=CLASSES, exemplar_only=["cone"]
        )
        reports = []
        for name, workers in (("w1a", 1), ("w1b", 1), ("w8", 8)):
            result = run(mock_config(scene_dir, tmp_path / name, workers=workers))
            assert not result.failures
            assert result.miou == 100.0
            reports.append((tmp_path / name / "report.json").read_bytes())
        assert reports[0] == reports[1] == reports[2]
        elapsed = time.perf_counter() - start
        assert elapsed < 60.0, f"end-to-end suite took {elapsed:.1f}s"


def test_sccm_recovery_direction(tmp_path):
    """Label-flip corruption at 0.3: the correction stage relabels every
    flipped proposal and the toggle grid orders as expected."""
    with criterion("sccm recovery and ablation ordering"):
        scene_dir = tmp_path / "scenes"
        generate_scene_suite(
            scene_dir,
            count=8,
            seed=200,
            classes=CLASSES,
            exemplar_only=["cone"],
            label_flip_rate=0.3,
        )
        vocab = Vocabulary.from_list(CLASSES)
        flips = 0
        for scene in load_scene_dir(scene_dir):
            truth = {
                (o.box.x, o.box.y, o.box.w, o.box.h): o.class_name for o in scene.objects
            }
            for det in MockTextDetector(scene).detect_text(None, vocab.classes):
                if truth[(det.box.x, det.box.y, det.box.w, det.box.h)] != det.label:
                    flips += 1
        assert flips > 0, "corrupted fixture must contain flips"

        sccm_run = run(mock_config(scene_dir, tmp_path / "sccm_on"))
        assert sccm_run.corrections_total == flips  # 100% of flipped proposals

        grid = ablate(mock_config(scene_dir, tmp_path / "grid"))
        rows = {r.name: r for r in grid.rows}
        assert rows["both"].miou >= rows["+sccm"].miou >= rows["baseline"].miou
        assert rows["both"].miou >= rows["+visual"].miou >= rows["baseline"].miou


def test_visual_prompt_coverage(tmp_path):
    """Exemplar-only classes score IoU 0 with visual prompts off and IoU 100
    with them on, under zero corruption."""
    with criterion("visual prompt coverage"):
        scene_dir = tmp_path / "scenes"
        generate_scene_suite(
            scene_dir, count=4, seed=300, classes=CLASSES, exemplar_only=["cone"]
        )
        cone = CLASSES.index("cone")
        on = run(mock_config(scene_dir, tmp_path / "on"))
        off = run(
            mock_config(scene_dir, tmp_path / "off", visual_prompts={"enabled": False})
        )
        assert on.report.to_json()["overall"]["per_class_iou"][cone] == 100.0
        assert off.report.to_json()["overall"]["per_class_iou"][cone] == 0.0


def test_protocol_roundtrip_identity():
    """Encode/decode is the identity over 1000 randomized messages."""
    with criterion("protocol round trip"):
        from openrgbt.backend import protocol as proto

        rng = np.random.default_rng(7)
        ops = list(proto.RESULT_TYPES)
        for i in range(500):
            request = random_request(rng)
            wire = json.loads(json.dumps(proto.encode_request(f"q{i}", request)))
            request_id, decoded = proto.decode_request(wire)
            assert (request_id, decoded) == (f"q{i}", request)
        for i in range(500):
            op = ops[i % len(ops)]
            result = random_result(rng, op)
            wire = json.loads(json.dumps(proto.encode_response(f"p{i}", result)))
            assert proto.decode_response(wire, op, f"p{i}") == result
