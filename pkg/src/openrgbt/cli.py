"""Command-line interface: fuse, detect, segment, eval, calibrate, ablate,
and the end-to-end run, all driven by a JSON config with flag overrides."""

from __future__ import annotations

import dataclasses
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, pipeline
from .backend.mock import (
    DEFAULT_PALETTE,
    MockBackendSet,
    MockScene,
    generate_scene_suite,
)
from .backend.protocol import BackendError, ProtocolError
from .backend.transport import BackendClient, TransportError, open_transport
from .core import Box, Raster, Vocabulary, load_label_png
from .fusion import ImagePair, WeightMap, fuse, reference_weights
from .metrics import EvalSample, evaluate_run
from .pipeline import ConfigError, PipelineConfig
from .prompting import (
    DetectionProposal,
    ExemplarLibrary,
    detect_text,
    detect_visual,
    union_proposals,
)
from .segmentation import composite, segment_proposals

logger = logging.getLogger(__name__)


@click.group()
@click.version_option(version=__version__, prog_name="openrgbt")
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool):
    """Zero-shot open-vocabulary segmentation over visible/thermal pairs."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load_config(config_path: str, **overrides) -> PipelineConfig:
    try:
        config = PipelineConfig.load(config_path)
        updates = {k: v for k, v in overrides.items() if v is not None}
        if updates:
            config = dataclasses.replace(config, **updates)
        return config
    except ConfigError as exc:
        click.echo(f"error: invalid config: {exc}", err=True)
        sys.exit(pipeline.EXIT_CONFIG)


def _backend_set(spec: str):
    """Resolve a --backend option: ``mock:<scene.json>`` for in-process
    mocks, a path to an endpoint JSON file, or inline endpoint JSON."""
    if spec.startswith("mock:"):
        scene = MockScene.load(spec[len("mock:") :])
        mocks = MockBackendSet.for_scene(scene)
        return {
            "text": mocks.text,
            "visual": mocks.visual,
            "embedder": mocks.embedder,
            "segmenter": mocks.segmenter,
            "weights": mocks.weights,
        }
    endpoint = json.loads(spec) if spec.lstrip().startswith("{") else json.loads(
        Path(spec).read_text(encoding="utf-8")
    )
    client = BackendClient(open_transport(endpoint))
    return {key: client for key in ("text", "visual", "embedder", "segmenter", "weights")}


# ---------------------------------------------------------------------------


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--output-dir", default=None, help="Override the output directory.")
@click.option("--workers", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--sccm/--no-sccm", "sccm_enabled", default=None)
@click.option(
    "--visual-prompts/--no-visual-prompts", "visual_prompts_enabled", default=None
)
def run_cmd(config_path, output_dir, workers, seed, sccm_enabled, visual_prompts_enabled):
    """Run the full pipeline over the configured samples."""
    config = _load_config(
        config_path,
        output_dir=output_dir,
        workers=workers,
        seed=seed,
        sccm_enabled=sccm_enabled,
        visual_prompts_enabled=visual_prompts_enabled,
    )
    try:
        result = pipeline.run(config)
    except ConfigError as exc:
        click.echo(f"error: invalid config: {exc}", err=True)
        sys.exit(pipeline.EXIT_CONFIG)
    except (TransportError, BackendError, ProtocolError) as exc:
        click.echo(f"error: backend unavailable: {exc}", err=True)
        sys.exit(pipeline.EXIT_BACKEND)
    click.echo(
        f"processed {len(result.outcomes)} sample(s), "
        f"{len(result.failures)} failure(s), "
        f"{result.corrections_total} label correction(s)"
    )
    if result.report is not None:
        click.echo(result.report.to_text())
        click.echo(f"report written to {result.output_dir}/report.json")
    if result.failures:
        click.echo(f"see {result.output_dir}/run_summary.json for failures", err=True)
    sys.exit(result.exit_code)


@main.command("fuse")
@click.option("--rgb", "rgb_path", required=True, type=click.Path(exists=True))
@click.option("--thermal", "thermal_path", required=True, type=click.Path(exists=True))
@click.option(
    "--weights",
    default="reference",
    help="'reference', 'file:<weight map png>', or 'backend'.",
)
@click.option("--window", type=int, default=9, help="Reference heuristic window.")
@click.option("--backend", "backend_spec", default=None, help="Endpoint for --weights backend.")
@click.option("--out", "out_path", required=True, type=click.Path())
def fuse_cmd(rgb_path, thermal_path, weights, window, backend_spec, out_path):
    """Fuse one visible/thermal pair into a single image."""
    pair = ImagePair(
        rgb=Raster.load_png(rgb_path),
        thermal=Raster.load_png(thermal_path),
        id=Path(rgb_path).stem,
    )
    if weights == "reference":
        weight_map = reference_weights(pair, window)
    elif weights.startswith("file:"):
        weight_map = WeightMap.load_png(weights[len("file:") :])
    elif weights == "backend":
        if backend_spec is None:
            raise click.UsageError("--weights backend needs --backend")
        backends = _backend_set(backend_spec)
        weight_map = WeightMap(
            np.clip(backends["weights"].fusion_weights(pair.rgb, pair.thermal), 0.0, 1.0)
        )
    else:
        raise click.UsageError(f"unknown weights mode {weights!r}")
    fuse(pair, weight_map).save_png(out_path)
    click.echo(f"wrote {out_path}")


def _proposal_to_json(p: DetectionProposal, vocab: Vocabulary) -> dict:
    return {
        "box": p.box.to_list(),
        "class": vocab.classes[p.class_id],
        "class_id": p.class_id,
        "score": p.score,
        "source": p.source,
        "initial_class_id": p.initial_class_id,
    }


def _proposal_from_json(obj: dict) -> DetectionProposal:
    return DetectionProposal(
        box=Box.from_list(obj["box"]),
        class_id=int(obj["class_id"]),
        score=float(obj["score"]),
        source=str(obj["source"]),
        initial_class_id=int(obj.get("initial_class_id", obj["class_id"])),
    )


@main.command("detect")
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--exemplars", "exemplars_path", default=None, type=click.Path(exists=True))
@click.option("--backend", "backend_spec", required=True)
@click.option("--score-floor-text", type=float, default=0.35)
@click.option("--score-floor-visual", type=float, default=0.4)
@click.option("--dedup-iou", type=float, default=0.7)
@click.option("--out", "out_path", required=True, type=click.Path())
def detect_cmd(
    image_path,
    vocab_path,
    exemplars_path,
    backend_spec,
    score_floor_text,
    score_floor_visual,
    dedup_iou,
    out_path,
):
    """Detect proposals on a fused image with text (and exemplar) prompts."""
    image = Raster.load_png(image_path)
    vocab = Vocabulary.load(vocab_path)
    backends = _backend_set(backend_spec)
    text_props = detect_text(image, vocab, backends["text"], score_floor_text)
    visual_props = []
    if exemplars_path is not None:
        exemplars = ExemplarLibrary.load(exemplars_path).resolve()
        visual_props = detect_visual(
            image, vocab, exemplars, backends["visual"], score_floor_visual
        )
    proposals = union_proposals(text_props, visual_props, dedup_iou)
    Path(out_path).write_text(
        json.dumps([_proposal_to_json(p, vocab) for p in proposals], indent=2),
        encoding="utf-8",
    )
    click.echo(f"wrote {len(proposals)} proposal(s) to {out_path}")


@main.command("segment")
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--proposals", "proposals_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--backend", "backend_spec", required=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def segment_cmd(image_path, proposals_path, vocab_path, backend_spec, out_dir):
    """Mask the proposals and composite them into a label map bundle."""
    image = Raster.load_png(image_path)
    vocab = Vocabulary.load(vocab_path)
    backends = _backend_set(backend_spec)
    items = json.loads(Path(proposals_path).read_text(encoding="utf-8"))
    proposals = [_proposal_from_json(obj) for obj in items]
    instances = segment_proposals(image, proposals, backends["segmenter"])
    semantic_map = composite(instances, image.width, image.height)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    semantic_map.save_label_png(out / "label.png")
    semantic_map.save_instances_json(out / "instances.json", vocab)
    click.echo(f"wrote {out}/label.png and {out}/instances.json")


def _find_pred(pred_dir: Path, sample_id: str) -> Path | None:
    flat = pred_dir / f"{sample_id}.png"
    if flat.is_file():
        return flat
    nested = pred_dir / sample_id / "label.png"
    if nested.is_file():
        return nested
    return None


@main.command("eval")
@click.option("--pred-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--gt-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--conditions", "conditions_path", default=None, type=click.Path(exists=True))
@click.option("--ignore-index", type=int, default=255, show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path())
def eval_cmd(pred_dir, gt_dir, vocab_path, conditions_path, ignore_index, out_path):
    """Score predicted label maps against ground truth."""
    vocab = Vocabulary.load(vocab_path)
    pred_root = Path(pred_dir)
    gt_root = Path(gt_dir)
    tags: dict[str, str] = {}
    if conditions_path:
        from .datasets import _load_conditions

        tags = _load_conditions(conditions_path)

    def samples():
        for gt_path in sorted(gt_root.glob("*.png")):
            sample_id = gt_path.stem
            pred_path = _find_pred(pred_root, sample_id)
            if pred_path is None:
                logger.warning("no prediction for %s", sample_id)
                continue
            yield EvalSample(
                pred=load_label_png(pred_path),
                gt=load_label_png(gt_path),
                condition=tags.get(sample_id),
            )

    report = evaluate_run(samples(), vocab, ignore_index)
    click.echo(report.to_text())
    if out_path:
        report.save_json(out_path)
        click.echo(f"wrote {out_path}")


def _parse_grid(spec: str) -> list[float]:
    """Parse 'a:b:step' (inclusive), 'v1,v2,...' or a single value."""
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise click.UsageError(f"grid must be a:b:step, got {spec!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise click.UsageError("grid step must be positive")
        values = list(np.arange(start, stop + step * 0.5, step))
        return [round(float(v), 12) for v in values]
    return [float(v) for v in spec.split(",") if v.strip()]


@main.command("calibrate")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--th1-grid", required=True, help="Margin threshold grid a:b:step.")
@click.option("--th2-grid", required=True, help="Absolute threshold grid a:b:step.")
@click.option("--split", default=None, help="Override the dataset split.")
@click.option("--out", "out_path", default=None, type=click.Path())
def calibrate_cmd(config_path, th1_grid, th2_grid, split, out_path):
    """Sweep the correction thresholds and emit a CSV of scores."""
    config = _load_config(config_path)
    if split is not None:
        if config.dataset is None:
            raise click.UsageError("--split needs a dataset-backed config")
        config = dataclasses.replace(
            config, dataset=dataclasses.replace(config.dataset, split=split)
        )
    rows = pipeline.calibrate(config, _parse_grid(th1_grid), _parse_grid(th2_grid))
    csv_text = pipeline.calibration_csv(rows)
    if out_path:
        Path(out_path).write_text(csv_text, encoding="utf-8")
        click.echo(f"wrote {out_path}")
    else:
        click.echo(csv_text, nl=False)


@main.command("ablate")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def ablate_cmd(config_path):
    """Run the 2x2 toggle grid (baseline / +visual / +sccm / both)."""
    config = _load_config(config_path)
    result = pipeline.ablate(config)
    click.echo(result.to_text(), nl=False)
    click.echo(f"details under {config.output_dir}/ablation/")


@main.command("make-scenes")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--count", type=int, default=25, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--classes", default=",".join(DEFAULT_PALETTE), show_default=True)
@click.option("--exemplar-only", default="", help="Classes only exemplars can reach.")
@click.option("--miss-rate", type=float, default=0.0, show_default=True)
@click.option("--flip-rate", type=float, default=0.0, show_default=True)
@click.option("--size", type=int, default=96, show_default=True)
@click.option("--conditions", default="", help="Comma list cycled over scenes.")
def make_scenes_cmd(
    out_dir, count, seed, classes, exemplar_only, miss_rate, flip_rate, size, conditions
):
    """Generate a synthetic scene suite plus a ready-to-run config."""
    class_list = [c.strip() for c in classes.split(",") if c.strip()]
    exemplar_list = [c.strip() for c in exemplar_only.split(",") if c.strip()]
    condition_list = [c.strip() for c in conditions.split(",") if c.strip()]
    unknown = [c for c in exemplar_list if c not in class_list]
    if unknown:
        raise click.UsageError(f"exemplar-only classes not in --classes: {unknown}")
    out = Path(out_dir)
    scenes = generate_scene_suite(
        out / "scenes",
        count=count,
        seed=seed,
        classes=class_list,
        exemplar_only=exemplar_list,
        conditions=condition_list,
        width=size,
        height=size,
        miss_rate=miss_rate,
        label_flip_rate=flip_rate,
    )
    config = {
        "schema_version": pipeline.SCHEMA_VERSION,
        "vocab_file": "scenes/vocab.txt",
        "backends": "mock:scenes",
        "output_dir": "out",
        "seed": seed,
        "workers": 1,
        "ignore_index": 255,
        "sccm": {"enabled": True, "th1": 0.1, "th2": 0.3, "temperature": 10.0},
        "visual_prompts": {"enabled": True},
        "mock": {"margin": 0.3},
    }
    (out / "config.json").write_text(json.dumps(config, indent=2), encoding="utf-8")
    click.echo(f"wrote {len(scenes)} scene(s) under {out}/scenes")
    click.echo(f"run with: openrgbt run --config {out / 'config.json'}")


if __name__ == "__main__":
    main()
