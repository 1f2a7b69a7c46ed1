"""End-to-end orchestration: fuse, detect, correct, segment, evaluate.

A :class:`PipelineConfig` (JSON, schema version 1) names the sample
source, the backend endpoints (or ``mock:<scene-dir>`` for in-process
deterministic mocks), the two stage toggles, and all thresholds. ``run``
processes every sample through the stage chain and writes one bundle per
image plus an evaluation report; ``ablate`` repeats the run over the 2x2
toggle grid; ``calibrate`` sweeps the correction thresholds on cached
detections.

All randomness in a run descends from the scene seeds, so identical
config and seed produce byte-identical reports at any worker count.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .backend.base import Exemplar
from .backend.mock import MockBackendSet, MockScene, load_scene_dir
from .backend.protocol import (
    CAP_DETECT_TEXT,
    CAP_DETECT_VISUAL,
    CAP_EMBED_CROPS,
    CAP_EMBED_TEXTS,
    CAP_FUSION_WEIGHTS,
    CAP_SEGMENT,
    BackendError,
    ProtocolError,
)
from .backend.transport import BackendClient, TransportError, open_transport
from .core import Raster, Vocabulary
from .datasets import DatasetConfig, LoadStats, load_dataset
from .fusion import ImagePair, WeightMap, fuse, load_external_fused, reference_weights
from .metrics import ConfusionMatrix, EvalReport, confusion, macc, miou
from .prompting import (
    DEFAULT_DEDUP_IOU,
    DEFAULT_TEXT_FLOOR,
    DEFAULT_VISUAL_FLOOR,
    ExemplarLibrary,
    detect_text,
    detect_visual,
    union_proposals,
)
from .sccm import SccmConfig, confidence_matrix, correct_labels, embed_proposals
from .segmentation import InstanceResult, composite, segment_proposals

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3


class ConfigError(ValueError):
    """Invalid pipeline configuration."""


@dataclass(frozen=True)
class PipelineConfig:
    vocabulary: tuple[str, ...]
    backends: str | dict
    output_dir: str
    dataset: DatasetConfig | None = None
    fusion_weights: str = "reference"
    fusion_window: int = 9
    score_floor_text: float = DEFAULT_TEXT_FLOOR
    score_floor_visual: float = DEFAULT_VISUAL_FLOOR
    dedup_iou: float = DEFAULT_DEDUP_IOU
    sccm: SccmConfig = SccmConfig()
    sccm_enabled: bool = True
    visual_prompts_enabled: bool = True
    exemplars_path: str | None = None
    workers: int = 1
    seed: int = 0
    ignore_index: int | None = 255
    timeout: float = 60.0
    retries: int = 2
    mock_margin: float = 0.3
    mock_embedding_dim: int = 32

    @property
    def mock_scene_dir(self) -> str | None:
        if isinstance(self.backends, str) and self.backends.startswith("mock:"):
            return self.backends[len("mock:") :]
        return None

    @classmethod
    def from_json(cls, obj: dict, base_dir=None) -> "PipelineConfig":
        """Build and validate a config; relative paths are resolved against
        ``base_dir`` (normally the config file's directory)."""
        base = Path(base_dir) if base_dir is not None else Path.cwd()

        def resolve(path: str | None) -> str | None:
            if path is None:
                return None
            p = Path(path)
            return str(p if p.is_absolute() else base / p)

        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        version = obj.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema_version {version}")

        if "vocab_file" in obj:
            vocab_path = resolve(obj["vocab_file"])
            if not Path(vocab_path).is_file():
                raise ConfigError(f"vocab_file not found: {vocab_path}")
            vocabulary = tuple(Vocabulary.load(vocab_path).classes)
        elif "vocabulary" in obj:
            vocabulary = tuple(str(c) for c in obj["vocabulary"])
        else:
            raise ConfigError("config needs 'vocabulary' or 'vocab_file'")

        backends = obj.get("backends")
        if isinstance(backends, str) and backends.startswith("mock:"):
            scene_dir = resolve(backends[len("mock:") :])
            if not Path(scene_dir).is_dir():
                raise ConfigError(f"mock scene directory not found: {scene_dir}")
            backends = f"mock:{scene_dir}"
        elif isinstance(backends, dict):
            for key, endpoint in backends.items():
                if not isinstance(endpoint, dict) or "transport" not in endpoint:
                    raise ConfigError(f"backend endpoint {key!r} needs a 'transport'")
        else:
            raise ConfigError(
                "config 'backends' must be 'mock:<scene-dir>' or an endpoint map"
            )

        dataset_obj = obj.get("dataset")
        dataset = None
        if dataset_obj is not None:
            dataset_obj = dict(dataset_obj)
            dataset_obj["root"] = resolve(dataset_obj.get("root", ""))
            try:
                dataset = DatasetConfig.from_json(dataset_obj)
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"invalid dataset config: {exc}") from exc
            if not Path(dataset.root).is_dir():
                raise ConfigError(f"dataset root not found: {dataset.root}")

        fusion_obj = obj.get("fusion", {})
        fusion_weights = str(fusion_obj.get("weights", "reference"))
        if fusion_weights.startswith(("file:", "fused:")):
            kind, _, raw = fusion_weights.partition(":")
            resolved = resolve(raw)
            if not Path(resolved).exists():
                raise ConfigError(f"fusion {kind} path not found: {resolved}")
            fusion_weights = f"{kind}:{resolved}"
        elif fusion_weights not in ("reference", "backend"):
            raise ConfigError(
                "fusion weights must be 'reference', 'backend', 'file:<path>' "
                "or 'fused:<dir>'"
            )

        detection = obj.get("detection", {})
        sccm_obj = obj.get("sccm", {})
        try:
            sccm = SccmConfig(
                th1=float(sccm_obj.get("th1", 0.2)),
                th2=float(sccm_obj.get("th2", 0.5)),
                temperature=float(sccm_obj.get("temperature", 10.0)),
                normalize_embeddings=bool(sccm_obj.get("normalize_embeddings", True)),
                text_template=sccm_obj.get("text_template"),
            )
        except ValueError as exc:
            raise ConfigError(f"invalid correction config: {exc}") from exc

        visual_obj = obj.get("visual_prompts", {})
        exemplars_path = resolve(visual_obj.get("exemplars"))
        if exemplars_path is not None and not Path(exemplars_path).is_file():
            raise ConfigError(f"exemplar library not found: {exemplars_path}")

        mock_obj = obj.get("mock", {})
        output_dir = resolve(obj.get("output_dir"))
        if output_dir is None:
            raise ConfigError("config needs an 'output_dir'")

        workers = int(obj.get("workers", 1))
        if workers < 1:
            raise ConfigError("workers must be >= 1")

        ignore_index = obj.get("ignore_index", 255)
        if ignore_index is not None:
            ignore_index = int(ignore_index)

        try:
            return cls(
                vocabulary=vocabulary,
                backends=backends,
                output_dir=output_dir,
                dataset=dataset,
                fusion_weights=fusion_weights,
                fusion_window=int(fusion_obj.get("window", 9)),
                score_floor_text=float(detection.get("score_floor_text", DEFAULT_TEXT_FLOOR)),
                score_floor_visual=float(
                    detection.get("score_floor_visual", DEFAULT_VISUAL_FLOOR)
                ),
                dedup_iou=float(detection.get("dedup_iou", DEFAULT_DEDUP_IOU)),
                sccm=sccm,
                sccm_enabled=bool(sccm_obj.get("enabled", True)),
                visual_prompts_enabled=bool(visual_obj.get("enabled", True)),
                exemplars_path=exemplars_path,
                workers=workers,
                seed=int(obj.get("seed", 0)),
                ignore_index=ignore_index,
                timeout=float(obj.get("timeout", 60.0)),
                retries=int(obj.get("retries", 2)),
                mock_margin=float(mock_obj.get("margin", 0.3)),
                mock_embedding_dim=int(mock_obj.get("embedding_dim", 32)),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(obj, base_dir=path.parent)

    def vocab(self) -> Vocabulary:
        return Vocabulary.from_list(self.vocabulary)


# --------------------------------------------------------------------------
# Backend plumbing


class _MockBackends:
    """Per-scene in-process mocks."""

    def __init__(self, config: PipelineConfig):
        self.config = config

    def for_scene(self, scene: MockScene) -> MockBackendSet:
        return MockBackendSet.for_scene(
            scene,
            classes=self.config.vocabulary,
            embedding_dim=self.config.mock_embedding_dim,
            margin=self.config.mock_margin,
        )


class WireBackendPool:
    """Thread-local wire clients, one per distinct endpoint per thread.

    Stdio backends allow one in-flight request per connection, so every
    worker thread gets its own connections; HTTP endpoints could be shared
    but are pooled the same way for uniformity.
    """

    _CAPABILITY_KEYS = ("text", "visual", "embedder", "segmenter", "weights")

    def __init__(self, endpoints: dict, timeout: float, retries: int):
        self._endpoints = endpoints
        self._timeout = timeout
        self._retries = retries
        self._local = threading.local()
        self._all_clients: list[BackendClient] = []
        self._lock = threading.Lock()

    def _endpoint_for(self, capability_key: str) -> dict:
        endpoint = self._endpoints.get(capability_key) or self._endpoints.get("all")
        if endpoint is None:
            raise ConfigError(f"no backend endpoint configured for {capability_key!r}")
        return endpoint

    def client(self, capability_key: str) -> BackendClient:
        cache = getattr(self._local, "clients", None)
        if cache is None:
            cache = {}
            self._local.clients = cache
        endpoint = self._endpoint_for(capability_key)
        key = json.dumps(endpoint, sort_keys=True)
        if key not in cache:
            client = BackendClient(
                open_transport(endpoint, timeout=self._timeout),
                retries=self._retries,
            )
            cache[key] = client
            with self._lock:
                self._all_clients.append(client)
        return cache[key]

    def has_endpoint(self, capability_key: str) -> bool:
        return (
            self._endpoints.get(capability_key) is not None
            or self._endpoints.get("all") is not None
        )

    def close(self):
        with self._lock:
            clients, self._all_clients = self._all_clients, []
        for client in clients:
            try:
                client.close()
            except Exception:
                logger.exception("error closing backend client")


# --------------------------------------------------------------------------
# Run machinery


@dataclass
class SampleJob:
    sample_id: str
    pair: ImagePair | None = None
    gt: np.ndarray | None = None
    condition: str | None = None
    scene: MockScene | None = None


@dataclass
class SampleOutcome:
    sample_id: str
    cm: ConfusionMatrix | None
    condition: str | None
    corrections: int
    n_proposals: int
    n_text: int
    n_visual: int


@dataclass
class SampleFailure:
    sample_id: str
    error: str
    transport: bool


@dataclass
class RunResult:
    report: EvalReport | None
    outcomes: list[SampleOutcome]
    failures: list[SampleFailure]
    output_dir: str
    corrections_total: int
    load_stats: LoadStats

    @property
    def exit_code(self) -> int:
        return EXIT_BACKEND if self.failures else EXIT_OK

    @property
    def miou(self) -> float | None:
        if self.report is None:
            return None
        return self.report.to_json()["overall"]["mIoU"]

    @property
    def macc(self) -> float | None:
        if self.report is None:
            return None
        return self.report.to_json()["overall"]["mAcc"]


def _collect_jobs(config: PipelineConfig, vocab: Vocabulary, stats: LoadStats) -> list[SampleJob]:
    scene_dir = config.mock_scene_dir
    if scene_dir is not None:
        jobs = []
        for scene in load_scene_dir(scene_dir):
            jobs.append(
                SampleJob(
                    sample_id=scene.id,
                    pair=scene.render_pair(),
                    gt=scene.render_labels(vocab),
                    condition=scene.condition,
                    scene=scene,
                )
            )
        return jobs
    if config.dataset is None:
        raise ConfigError("non-mock runs need a 'dataset' config")
    jobs = []
    ignore = config.ignore_index if config.ignore_index is not None else 255
    for sample in load_dataset(config.dataset, ignore_index=ignore, stats=stats):
        jobs.append(
            SampleJob(
                sample_id=sample.pair.id,
                pair=sample.pair,
                gt=sample.gt,
                condition=sample.condition,
            )
        )
    jobs.sort(key=lambda j: j.sample_id)
    return jobs


def _weight_map_for(config: PipelineConfig, job: SampleJob, backends) -> WeightMap | None:
    mode = config.fusion_weights
    if mode == "reference":
        return reference_weights(job.pair, config.fusion_window)
    if mode.startswith("file:"):
        directory = Path(mode[len("file:") :])
        return WeightMap.load_png(directory / f"{job.sample_id}.png")
    if mode == "backend":
        weights = backends["weights"].fusion_weights(job.pair.rgb, job.pair.thermal)
        return WeightMap(np.clip(weights, 0.0, 1.0))
    return None  # "fused:" handled by the caller


def _fused_for(config: PipelineConfig, job: SampleJob, backends) -> Raster:
    if config.fusion_weights.startswith("fused:"):
        directory = Path(config.fusion_weights[len("fused:") :])
        fused = load_external_fused(directory / f"{job.sample_id}.png")
        if (fused.width, fused.height) != (job.pair.width, job.pair.height):
            raise ValueError(
                f"{job.sample_id}: external fused image dimensions do not match the pair"
            )
        return fused
    weights = _weight_map_for(config, job, backends)
    return fuse(job.pair, weights)


def _process_sample(
    config: PipelineConfig,
    vocab: Vocabulary,
    job: SampleJob,
    backends: dict,
    exemplars: Sequence[Exemplar],
    visual_active: bool,
    out_dir: Path,
) -> SampleOutcome:
    fused = _fused_for(config, job, backends)

    text_props = detect_text(
        fused, vocab, backends["text"], score_floor=config.score_floor_text
    )
    visual_props = []
    if visual_active and exemplars:
        visual_props = detect_visual(
            fused,
            vocab,
            exemplars,
            backends["visual"],
            score_floor=config.score_floor_visual,
        )
    proposals = union_proposals(text_props, visual_props, dedup_iou=config.dedup_iou)

    corrections = 0
    if config.sccm_enabled and proposals:
        embedder = backends["embedder"]
        text_embeddings = embedder.embed_texts(config.sccm.prompts(vocab.classes))
        proposal_embeddings = embed_proposals(fused, proposals, embedder)
        matrix = confidence_matrix(proposal_embeddings, text_embeddings, config.sccm)
        proposals, corrections = correct_labels(proposals, matrix, config.sccm)

    instances = segment_proposals(fused, proposals, backends["segmenter"])
    semantic_map = composite(instances, fused.width, fused.height)

    bundle = out_dir / job.sample_id
    bundle.mkdir(parents=True, exist_ok=True)
    semantic_map.save_label_png(bundle / "label.png")
    semantic_map.save_instances_json(bundle / "instances.json", vocab)

    cm = None
    if job.gt is not None:
        cm = confusion(semantic_map.labels, job.gt, vocab.size, config.ignore_index)
    return SampleOutcome(
        sample_id=job.sample_id,
        cm=cm,
        condition=job.condition,
        corrections=corrections,
        n_proposals=len(proposals),
        n_text=len(text_props),
        n_visual=len(visual_props),
    )


def _mock_exemplars(job: SampleJob) -> list[Exemplar]:
    return job.scene.exemplars() if job.scene is not None else []


def run(config: PipelineConfig) -> RunResult:
    """Process every sample through the full stage chain; see module docs."""
    vocab = config.vocab()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stats = LoadStats()
    jobs = _collect_jobs(config, vocab, stats)

    mock = _MockBackends(config) if config.mock_scene_dir is not None else None
    pool: WireBackendPool | None = None
    shared_exemplars: list[Exemplar] = []
    visual_active = config.visual_prompts_enabled
    needed_keys = {"text", "segmenter"}
    if config.sccm_enabled:
        needed_keys.add("embedder")
    if config.fusion_weights == "backend":
        needed_keys.add("weights")

    if mock is None:
        pool = WireBackendPool(config.backends, config.timeout, config.retries)
        try:
            if visual_active:
                if config.exemplars_path is None:
                    logger.info("visual prompts enabled but no exemplar library given")
                    visual_active = False
                elif not pool.has_endpoint("visual"):
                    logger.warning("no visual-prompt endpoint; continuing text-only")
                    visual_active = False
                elif CAP_DETECT_VISUAL not in pool.client("visual").capabilities:
                    logger.warning(
                        "backend lacks the visual-prompt capability; continuing text-only"
                    )
                    visual_active = False
                else:
                    shared_exemplars = ExemplarLibrary.load(config.exemplars_path).resolve()
                    needed_keys.add("visual")
            for key in sorted(needed_keys):
                missing = _CAPS_BY_KEY[key] - set(pool.client(key).capabilities)
                if missing:
                    raise ConfigError(
                        f"backend for {key!r} lacks capabilities {sorted(missing)}"
                    )
        except Exception:
            pool.close()
            raise
    elif visual_active:
        needed_keys.add("visual")

    def backends_for(job: SampleJob) -> dict:
        if mock is not None:
            backend_set = mock.for_scene(job.scene)
            return {
                "text": backend_set.text,
                "visual": backend_set.visual,
                "embedder": backend_set.embedder,
                "segmenter": backend_set.segmenter,
                "weights": backend_set.weights,
            }
        return {key: pool.client(key) for key in needed_keys}

    outcomes: list[SampleOutcome] = []
    failures: list[SampleFailure] = []
    lock = threading.Lock()

    def work(job: SampleJob):
        exemplars = _mock_exemplars(job) if mock is not None else shared_exemplars
        try:
            outcome = _process_sample(
                config, vocab, job, backends_for(job), exemplars, visual_active, out_dir
            )
            with lock:
                outcomes.append(outcome)
        except (TransportError, BackendError, ProtocolError) as exc:
            with lock:
                failures.append(SampleFailure(job.sample_id, str(exc), transport=True))
        except Exception as exc:  # noqa: BLE001 - summarized per sample
            logger.exception("sample %s failed", job.sample_id)
            with lock:
                failures.append(SampleFailure(job.sample_id, str(exc), transport=False))

    try:
        if config.workers <= 1:
            for job in jobs:
                work(job)
        else:
            with ThreadPoolExecutor(max_workers=config.workers) as executor:
                list(executor.map(work, jobs))
    finally:
        if pool is not None:
            pool.close()

    outcomes.sort(key=lambda o: o.sample_id)
    failures.sort(key=lambda f: f.sample_id)

    evaluated = [o for o in outcomes if o.cm is not None]
    report = None
    if evaluated:
        overall = ConfusionMatrix.zeros(vocab.size, config.ignore_index)
        conditions: dict[str, ConfusionMatrix] = {}
        for outcome in evaluated:
            overall = overall + outcome.cm
            if outcome.condition:
                existing = conditions.get(outcome.condition)
                conditions[outcome.condition] = (
                    outcome.cm if existing is None else existing + outcome.cm
                )
        report = EvalReport(
            vocab=vocab,
            ignore_index=config.ignore_index,
            overall=overall,
            conditions=conditions,
            n_samples=len(evaluated),
            n_skipped=stats.skipped,
        )

    corrections_total = sum(o.corrections for o in outcomes)
    result = RunResult(
        report=report,
        outcomes=outcomes,
        failures=failures,
        output_dir=str(out_dir),
        corrections_total=corrections_total,
        load_stats=stats,
    )
    _write_run_outputs(config, result)
    return result


_CAPS_BY_KEY = {
    "text": {CAP_DETECT_TEXT},
    "visual": {CAP_DETECT_VISUAL},
    "embedder": {CAP_EMBED_TEXTS, CAP_EMBED_CROPS},
    "segmenter": {CAP_SEGMENT},
    "weights": {CAP_FUSION_WEIGHTS},
}


def _write_run_outputs(config: PipelineConfig, result: RunResult) -> None:
    out_dir = Path(result.output_dir)
    if result.report is not None:
        report_json = result.report.to_json()
        report_json["corrections"] = result.corrections_total
        (out_dir / "report.json").write_text(
            json.dumps(report_json, indent=2, sort_keys=True), encoding="utf-8"
        )
        (out_dir / "report.txt").write_text(result.report.to_text(), encoding="utf-8")
    summary = {
        "samples_processed": len(result.outcomes),
        "samples_failed": len(result.failures),
        "samples_skipped_at_load": result.load_stats.skipped,
        "corrections": result.corrections_total,
        "failures": [
            {"id": f.sample_id, "error": f.error, "transport": f.transport}
            for f in result.failures
        ],
    }
    (out_dir / "run_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8"
    )


# --------------------------------------------------------------------------
# Ablation

ABLATION_ROWS = (
    ("baseline", False, False),
    ("+visual", True, False),
    ("+sccm", False, True),
    ("both", True, True),
)


@dataclass
class AblationRow:
    name: str
    visual_prompts: bool
    sccm: bool
    macc: float | None
    miou: float | None
    corrections: int


@dataclass
class AblationResult:
    rows: list[AblationRow]

    def to_json(self) -> list[dict]:
        return [dataclasses.asdict(row) for row in self.rows]

    def to_text(self) -> str:
        def fmt(v):
            return "    -" if v is None else f"{v:8.2f}"

        lines = [f"{'configuration':<14} {'mAcc':>8} {'mIoU':>8} {'corrections':>12}"]
        for row in self.rows:
            lines.append(
                f"{row.name:<14} {fmt(row.macc)} {fmt(row.miou)} {row.corrections:>12d}"
            )
        return "\n".join(lines) + "\n"


def ablate(config: PipelineConfig) -> AblationResult:
    """Run the four-toggle grid (baseline / +visual / +sccm / both) and
    collect their scores."""
    rows = []
    base_out = Path(config.output_dir) / "ablation"
    for name, visual_on, sccm_on in ABLATION_ROWS:
        sub = dataclasses.replace(
            config,
            visual_prompts_enabled=visual_on,
            sccm_enabled=sccm_on,
            output_dir=str(base_out / name.replace("+", "with_")),
        )
        result = run(sub)
        rows.append(
            AblationRow(
                name=name,
                visual_prompts=visual_on,
                sccm=sccm_on,
                macc=result.macc,
                miou=result.miou,
                corrections=result.corrections_total,
            )
        )
    ablation = AblationResult(rows)
    base_out.mkdir(parents=True, exist_ok=True)
    (base_out / "ablation.json").write_text(
        json.dumps(ablation.to_json(), indent=2, sort_keys=True), encoding="utf-8"
    )
    (base_out / "ablation.txt").write_text(ablation.to_text(), encoding="utf-8")
    return ablation


# --------------------------------------------------------------------------
# Threshold calibration


@dataclass
class _PreparedSample:
    sample_id: str
    proposals: list
    matrix: object
    masks: list
    captions: list[str]
    gt: np.ndarray
    width: int
    height: int


def calibrate(
    config: PipelineConfig,
    th1_values: Sequence[float],
    th2_values: Sequence[float],
) -> list[dict]:
    """Sweep the correction thresholds over labeled samples. Detection,
    embedding, and segmentation run once per sample; only the correction,
    compositing, and scoring repeat per grid cell."""
    vocab = config.vocab()
    stats = LoadStats()
    jobs = _collect_jobs(config, vocab, stats)
    mock = _MockBackends(config) if config.mock_scene_dir is not None else None
    pool: WireBackendPool | None = None
    shared_exemplars: list[Exemplar] = []
    if mock is None:
        pool = WireBackendPool(config.backends, config.timeout, config.retries)
        if config.visual_prompts_enabled and config.exemplars_path is not None:
            shared_exemplars = ExemplarLibrary.load(config.exemplars_path).resolve()

    def backends_for(job: SampleJob) -> dict:
        if mock is not None:
            backend_set = mock.for_scene(job.scene)
            return {
                "text": backend_set.text,
                "visual": backend_set.visual,
                "embedder": backend_set.embedder,
                "segmenter": backend_set.segmenter,
                "weights": backend_set.weights,
            }
        return {key: pool.client(key) for key in ("text", "visual", "embedder", "segmenter", "weights") if pool.has_endpoint(key)}

    prepared: list[_PreparedSample] = []
    try:
        for job in jobs:
            if job.gt is None:
                continue
            backends = backends_for(job)
            fused = _fused_for(config, job, backends)
            text_props = detect_text(fused, vocab, backends["text"], config.score_floor_text)
            visual_props = []
            exemplars = _mock_exemplars(job) if mock is not None else shared_exemplars
            if config.visual_prompts_enabled and exemplars and "visual" in backends:
                visual_props = detect_visual(
                    fused, vocab, exemplars, backends["visual"], config.score_floor_visual
                )
            proposals = union_proposals(text_props, visual_props, config.dedup_iou)
            if not proposals:
                continue
            embedder = backends["embedder"]
            text_embeddings = embedder.embed_texts(config.sccm.prompts(vocab.classes))
            proposal_embeddings = embed_proposals(fused, proposals, embedder)
            matrix = confidence_matrix(proposal_embeddings, text_embeddings, config.sccm)
            segments = backends["segmenter"].segment(fused, [p.box for p in proposals])
            prepared.append(
                _PreparedSample(
                    sample_id=job.sample_id,
                    proposals=proposals,
                    matrix=matrix,
                    masks=[s.mask for s in segments],
                    captions=[s.caption for s in segments],
                    gt=job.gt,
                    width=fused.width,
                    height=fused.height,
                )
            )
    finally:
        if pool is not None:
            pool.close()

    rows: list[dict] = []
    for th1 in th1_values:
        for th2 in th2_values:
            cfg = dataclasses.replace(config.sccm, th1=float(th1), th2=float(th2))
            overall = ConfusionMatrix.zeros(vocab.size, config.ignore_index)
            corrections_total = 0
            for ps in prepared:
                corrected, corrections = correct_labels(ps.proposals, ps.matrix, cfg)
                corrections_total += corrections
                instances = [
                    InstanceResult(proposal=p, mask=m, caption=c, order=i)
                    for i, (p, m, c) in enumerate(zip(corrected, ps.masks, ps.captions))
                ]
                semantic_map = composite(instances, ps.width, ps.height)
                overall = overall + confusion(
                    semantic_map.labels, ps.gt, vocab.size, config.ignore_index
                )
            _, mean_iou = miou(overall)
            _, mean_acc = macc(overall)
            rows.append(
                {
                    "th1": float(th1),
                    "th2": float(th2),
                    "mIoU": None if np.isnan(mean_iou) else float(mean_iou),
                    "mAcc": None if np.isnan(mean_acc) else float(mean_acc),
                    "corrections": corrections_total,
                }
            )
    return rows


def calibration_csv(rows: Sequence[dict]) -> str:
    lines = ["th1,th2,mIoU,mAcc,corrections"]
    for row in rows:
        miou_s = "" if row["mIoU"] is None else f"{row['mIoU']:.4f}"
        macc_s = "" if row["mAcc"] is None else f"{row['mAcc']:.4f}"
        lines.append(
            f"{row['th1']:.4f},{row['th2']:.4f},{miou_s},{macc_s},{row['corrections']}"
        )
    return "\n".join(lines) + "\n"
