"""End-to-end command-line flows on synthetic data."""
import json

import pytest

from conftest import small_dataset
from lapse.annotations import write_annotations
from lapse.cli import main

TRAIN_SPEEDUPS = [
    "--feature-dim", "16",
    "--epochs", "2",
    "--batch-size", "16",
]


@pytest.fixture
def annotations(tmp_path):
    path = tmp_path / "annotations.json"
    write_annotations(small_dataset(), path)
    return str(path)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One shared prepare + train, reused by evaluate and timeline tests."""
    root = tmp_path_factory.mktemp("trained")
    annotations = root / "annotations.json"
    write_annotations(small_dataset(), annotations)
    manifest = prepare_manifest(root, str(annotations))
    run_dir = train_run(root, manifest)
    return manifest, run_dir


def prepare_manifest(tmp_path, annotations, event="bleeding", extra=()):
    manifest = tmp_path / f"manifest_{event}"
    code = main(
        [
            "prepare",
            "--annotations", annotations,
            "--event", event,
            "--out", str(manifest),
            *extra,
        ]
    )
    assert code == 0
    return manifest


def test_stats_prints_table(annotations, capsys):
    assert main(["stats", "--annotations", annotations]) == 0
    out = capsys.readouterr().out
    assert "Bleeding" in out
    assert "Needle Passing" in out
    assert "Cases" in out


def test_stats_missing_file_is_usage_error(tmp_path, capsys):
    code = main(["stats", "--annotations", str(tmp_path / "missing.json")])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_unknown_event_is_usage_error(tmp_path, annotations):
    with pytest.raises(SystemExit) as exc:
        main(
            [
                "prepare",
                "--annotations", annotations,
                "--event", "suturing",
                "--out", str(tmp_path / "m"),
            ]
        )
    assert exc.value.code == 2


def test_irrelevant_event_is_rejected(tmp_path, annotations):
    with pytest.raises(SystemExit) as exc:
        main(
            [
                "prepare",
                "--annotations", annotations,
                "--event", "irrelevant",
                "--out", str(tmp_path / "m"),
            ]
        )
    assert exc.value.code == 2


def test_prepare_writes_manifest_directory(tmp_path, annotations):
    manifest = prepare_manifest(tmp_path, annotations)
    names = {p.name for p in manifest.iterdir()}
    assert names == {"task.json", "split.csv", "train_examples.csv"}
    info = json.loads((manifest / "task.json").read_text())
    assert info["event"] == "bleeding"
    assert info["seed"] == 0
    assert info["balance"] is False


def test_prepare_is_deterministic(tmp_path, annotations):
    a = prepare_manifest(tmp_path / "a", annotations)
    b = prepare_manifest(tmp_path / "b", annotations)
    assert (a / "split.csv").read_text() == (b / "split.csv").read_text()
    assert (a / "train_examples.csv").read_text() == (b / "train_examples.csv").read_text()


def test_prepare_balance_equalizes_classes(tmp_path, annotations, capsys):
    prepare_manifest(tmp_path, annotations, extra=["--balance"])
    out = capsys.readouterr().out
    # "... training examples: N positive, N negative"
    tail = out.rsplit("training examples:", 1)[1]
    pos, neg = (int(part.split()[0]) for part in tail.split(","))
    assert pos == neg


def test_workers_zero_is_usage_error(annotations, capsys):
    code = main(["stats", "--annotations", annotations, "--workers", "0"])
    assert code == 2


def test_extra_workers_warn_but_run(annotations, capsys):
    code = main(["stats", "--annotations", annotations, "--workers", "4"])
    assert code == 0
    assert "single-process" in capsys.readouterr().err


def test_train_without_manifest_is_usage_error(tmp_path, capsys):
    code = main(
        ["train", "--manifest", str(tmp_path / "nowhere"), "--out", str(tmp_path / "run")]
    )
    assert code == 2
    assert "prepare" in capsys.readouterr().err


def train_run(tmp_path, manifest, extra=()):
    run_dir = tmp_path / "run"
    code = main(
        [
            "train",
            "--manifest", str(manifest),
            "--out", str(run_dir),
            *TRAIN_SPEEDUPS,
            *extra,
        ]
    )
    assert code == 0
    return run_dir


def test_train_writes_run_directory(trained):
    _, run_dir = trained
    names = {p.name for p in run_dir.iterdir()}
    assert names == {"config.json", "report.csv", "best.ckpt", "last.ckpt", "log.txt"}
    config = json.loads((run_dir / "config.json").read_text())
    assert config["run"]["head"] == "transformer"
    assert config["run"]["feature_dim"] == 16
    assert config["run"]["epochs"] == 2
    assert config["train"]["epochs"] == 2
    assert config["run"]["event"] == "bleeding"


def test_train_config_file_and_flag_precedence(tmp_path, annotations):
    manifest = prepare_manifest(tmp_path, annotations)
    config_file = tmp_path / "train.json"
    config_file.write_text(json.dumps({"head": "gru", "epochs": 1, "feature_dim": 16}))
    run_dir = tmp_path / "run"
    code = main(
        [
            "train",
            "--manifest", str(manifest),
            "--out", str(run_dir),
            "--config", str(config_file),
            "--epochs", "2",  # flag beats file
            "--batch-size", "16",
        ]
    )
    assert code == 0
    echoed = json.loads((run_dir / "config.json").read_text())["run"]
    assert echoed["head"] == "gru"  # from file
    assert echoed["epochs"] == 2  # flag wins
    assert echoed["feature_dim"] == 16


def test_train_rejects_unknown_config_keys(tmp_path, annotations, capsys):
    manifest = prepare_manifest(tmp_path, annotations)
    config_file = tmp_path / "train.json"
    config_file.write_text(json.dumps({"momentum": 0.9}))
    code = main(
        [
            "train",
            "--manifest", str(manifest),
            "--out", str(tmp_path / "run"),
            "--config", str(config_file),
        ]
    )
    assert code == 2
    assert "momentum" in capsys.readouterr().err


def test_train_rejects_unknown_head(tmp_path, annotations):
    manifest = prepare_manifest(tmp_path, annotations)
    with pytest.raises(SystemExit) as exc:
        main(
            [
                "train",
                "--manifest", str(manifest),
                "--out", str(tmp_path / "run"),
                "--head", "mlp",
            ]
        )
    assert exc.value.code == 2


def test_evaluate_prints_report_and_writes_csv(tmp_path, trained, capsys):
    manifest, run_dir = trained
    report = tmp_path / "report.csv"
    code = main(
        [
            "evaluate",
            "--manifest", str(manifest),
            "--checkpoint", f"bleeding={run_dir / 'best.ckpt'}",
            "--report", str(report),
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "stub-transformer" in out
    assert "Average" in out
    lines = report.read_text().strip().splitlines()
    assert lines[0] == "backbone,head,event,accuracy,precision,recall,f1"
    assert len(lines) == 2
    assert lines[1].startswith("stub,transformer,bleeding,")


def test_evaluate_rejects_malformed_checkpoint_argument(tmp_path, annotations, capsys):
    manifest = prepare_manifest(tmp_path, annotations)
    code = main(
        ["evaluate", "--manifest", str(manifest), "--checkpoint", "no-equals-sign"]
    )
    assert code == 2


def test_evaluate_requires_at_least_one_checkpoint(tmp_path, annotations):
    manifest = prepare_manifest(tmp_path, annotations)
    assert main(["evaluate", "--manifest", str(manifest)]) == 2


def test_timeline_end_to_end(tmp_path, trained, capsys):
    _, run_dir = trained
    checkpoint = run_dir / "best.ckpt"
    out_prefix = tmp_path / "tl" / "demo"
    code = main(
        [
            "timeline",
            "--video", "synthetic://demo?frames=450",
            "--models", f"abdominal_access={checkpoint}",
            "--models", f"bleeding={checkpoint}",
            "--models", f"coag_transection={checkpoint}",
            "--models", f"needle_passing={checkpoint}",
            "--out", str(out_prefix),
            "--smooth",
        ]
    )
    assert code == 0
    for suffix in (".csv", ".json", ".svg"):
        assert out_prefix.with_suffix(suffix).exists()
    payload = json.loads(out_prefix.with_suffix(".json").read_text())
    assert payload["case_id"] == "demo"
    assert payload["window_sec"] == 3.0
    # 15 s video, 3 s window, 1 s stride
    assert len(payload["entries"]) == 13
    out = capsys.readouterr().out
    assert "13 windows" in out


def test_timeline_requires_all_four_models(tmp_path, trained, capsys):
    _, run_dir = trained
    code = main(
        [
            "timeline",
            "--video", "synthetic://demo?frames=450",
            "--models", f"bleeding={run_dir / 'best.ckpt'}",
            "--out", str(tmp_path / "tl"),
        ]
    )
    assert code == 2
    assert "missing" in capsys.readouterr().err


def test_timeline_unreadable_video_is_runtime_error(tmp_path, trained, capsys):
    _, run_dir = trained
    checkpoint = run_dir / "best.ckpt"
    code = main(
        [
            "timeline",
            "--video", str(tmp_path / "missing.mp4"),
            "--models", f"abdominal_access={checkpoint}",
            "--models", f"bleeding={checkpoint}",
            "--models", f"coag_transection={checkpoint}",
            "--models", f"needle_passing={checkpoint}",
            "--out", str(tmp_path / "tl"),
        ]
    )
    assert code == 3
