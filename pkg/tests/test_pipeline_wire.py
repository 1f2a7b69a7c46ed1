"""End-to-end run with wire backends: dataset on disk, mock server over stdio."""

import json
import sys
from pathlib import Path

import pytest

from openrgbt.backend.mock import generate_scene_suite
from openrgbt.core import Vocabulary, save_label_png
from openrgbt.pipeline import ConfigError, PipelineConfig, run

CLASSES = ["car", "person", "bike", "cone"]


@pytest.fixture
def wire_workspace(tmp_path):
    """One scene rendered to a generic-layout dataset plus an exemplar
    library, served by the stdio mock backend."""
    scene_dir = tmp_path / "scenes"
    [scene] = generate_scene_suite(
        scene_dir, count=1, seed=41, classes=CLASSES, exemplar_only=["cone"]
    )
    vocab = Vocabulary.from_list(CLASSES)

    data = tmp_path / "data"
    for sub in ("rgb", "thermal", "labels"):
        (data / sub).mkdir(parents=True)
    pair = scene.render_pair()
    pair.rgb.save_png(data / "rgb" / f"{scene.id}.png")
    pair.thermal.save_png(data / "thermal" / f"{scene.id}.png")
    save_label_png(data / "labels" / f"{scene.id}.png", scene.render_labels(vocab))

    exemplar = scene.exemplars()[0]
    library = [
        {
            "class": exemplar.class_name,
            "image_path": str(data / "rgb" / f"{scene.id}.png"),
            "box": exemplar.box.to_list(),
        }
    ]
    exemplars_path = tmp_path / "exemplars.json"
    exemplars_path.write_text(json.dumps(library))

    endpoint = {
        "transport": "stdio",
        "cmd": [
            sys.executable,
            "-m",
            "openrgbt.backend.mock_server",
            "--scene",
            str(scene_dir / f"{scene.id}.json"),
            "--classes",
            ",".join(CLASSES),
        ],
    }
    return tmp_path, data, exemplars_path, endpoint


def wire_config(tmp_path, data, exemplars_path, endpoint, **overrides):
    obj = {
        "vocabulary": CLASSES,
        "backends": {"all": endpoint},
        "dataset": {"layout": "generic", "root": str(data)},
        "output_dir": str(tmp_path / "out"),
        "sccm": {"enabled": True, "th1": 0.1, "th2": 0.3},
        "visual_prompts": {"enabled": True, "exemplars": str(exemplars_path)},
        "ignore_index": 255,
    }
    obj.update(overrides)
    return PipelineConfig.from_json(obj)


def test_wire_run_matches_ground_truth(wire_workspace):
    tmp_path, data, exemplars_path, endpoint = wire_workspace
    result = run(wire_config(tmp_path, data, exemplars_path, endpoint))
    assert not result.failures, result.failures
    assert result.miou == 100.0
    assert (tmp_path / "out" / "report.json").is_file()


def test_wire_run_degrades_without_exemplars(wire_workspace):
    tmp_path, data, exemplars_path, endpoint = wire_workspace
    config = wire_config(
        tmp_path,
        data,
        exemplars_path,
        endpoint,
        visual_prompts={"enabled": True},  # enabled but no library given
        output_dir=str(tmp_path / "out2"),
    )
    result = run(config)
    assert not result.failures
    # The exemplar-only class is unreachable: score drops below perfect.
    assert result.miou < 100.0


def test_wire_run_exits_3_on_dead_backend(wire_workspace):
    from click.testing import CliRunner

    from openrgbt.cli import main

    tmp_path_ws, data, exemplars_path, _ = wire_workspace
    dead_endpoint = {
        "transport": "stdio",
        "cmd": [
            sys.executable,
            "-c",
            "import sys; [print('junk') or sys.stdout.flush() for _ in sys.stdin]",
        ],
    }
    config_obj = {
        "vocabulary": CLASSES,
        "backends": {"all": dead_endpoint},
        "dataset": {"layout": "generic", "root": str(data)},
        "output_dir": str(tmp_path_ws / "out3"),
        "visual_prompts": {"enabled": False},
        "retries": 0,
        "timeout": 5,
    }
    config_path = tmp_path_ws / "dead.json"
    config_path.write_text(json.dumps(config_obj))
    result = CliRunner().invoke(main, ["run", "--config", str(config_path)])
    assert result.exit_code == 3
    assert "backend unavailable" in result.output


def test_wire_missing_capability_is_config_error(wire_workspace):
    tmp_path, data, exemplars_path, endpoint = wire_workspace
    hello_only = {
        "transport": "stdio",
        "cmd": [
            sys.executable,
            "-c",
            (
                "import sys, json\n"
                "for line in sys.stdin:\n"
                "    req = json.loads(line)\n"
                "    print(json.dumps({'id': req['id'], 'ok': True, 'result':\n"
                "        {'embedding_dim': 8, 'capabilities': ['embed_texts']}}))\n"
                "    sys.stdout.flush()"
            ),
        ],
    }
    config = wire_config(
        tmp_path,
        data,
        exemplars_path,
        hello_only,
        visual_prompts={"enabled": False},
        output_dir=str(tmp_path / "out4"),
    )
    with pytest.raises(ConfigError, match="lacks capabilities"):
        run(config)
