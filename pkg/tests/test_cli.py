import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from mmgesture import store
from mmgesture.cli import RunConfig, main
from mmgesture.segmentation import SEGMENTS_SCHEMA
from mmgesture.sim import Gesture, make_gesture
from mmgesture.config import RadarConfig


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("simulate", "--out", root / "data", "--count", 6, "--frames", 10, "--seed", 3) == 0
    return root


def test_simulate_layout_and_determinism(tmp_path):
    assert run("simulate", "--out", tmp_path / "a", "--count", 2, "--seed", 9) == 0
    assert run("simulate", "--out", tmp_path / "b", "--count", 2, "--seed", 9) == 0
    files = sorted(p.name for p in (tmp_path / "a" / "sequences").iterdir())
    assert len(files) == 10
    manifest = store.read_manifest(tmp_path / "a")
    assert set(manifest["histogram"].values()) == {2}
    for sub in ("manifest.json", *(f"sequences/{f}" for f in files)):
        assert (tmp_path / "a" / sub).read_bytes() == (tmp_path / "b" / sub).read_bytes()
    assert len(list((tmp_path / "a" / "scripts").iterdir())) == 10


def test_simulate_class_subset(tmp_path):
    assert run("simulate", "--out", tmp_path, "--count", 2, "--classes", "Swipe,Noise") == 0
    hist = store.read_manifest(tmp_path)["histogram"]
    assert hist["Swipe"] == 2 and hist["Noise"] == 2 and hist["PalmHold"] == 0


def test_drop_zero_roundtrip(workspace, tmp_path):
    assert run("inject-drops", "--data", workspace / "data", "--out", tmp_path, "--drop-prob", 0) == 0
    for (_, a, _), (_, b, _) in zip(store.iter_dataset(workspace / "data"), store.iter_dataset(tmp_path)):
        assert a.values().tobytes() == b.values().tobytes()


def test_drop_stats_and_restore(workspace):
    dropped, restored = workspace / "dropped", workspace / "restored"
    assert run("inject-drops", "--data", workspace / "data", "--out", dropped,
               "--drop-prob", 0.25, "--seed", 4) == 0
    stats = json.loads((dropped / "drop_stats.json").read_text())
    for entry, (rec, seq, _) in zip(stats["per_sequence"], store.iter_dataset(dropped)):
        assert entry["dropped_indices"] == [int(i) for i in np.flatnonzero(seq.drop_mask)]
        assert rec["dropped"] == entry["dropped"]
    assert stats["dropped_frames"] > 0
    assert run("restore", "--data", dropped, "--out", restored) == 0
    for _, seq, _ in store.iter_dataset(restored):
        assert len(seq) == seq.nominal_length == 10


def test_train_eval_bitwise(workspace):
    out = workspace / "model7"
    assert run("train", "--data", workspace / "restored", "--L", 7, "--epochs", 2, "--out", out) == 0
    report = json.loads((out / "report.json").read_text())
    assert 5400 <= report["param_count"] <= 6600
    assert (out / "confusion.csv").read_text().startswith("true\\pred,")
    result = workspace / "eval.json"
    assert run("eval", "--data", workspace / "restored", "--weights", out, "--out", result) == 0
    assert json.loads(result.read_text())["val_accuracy"] == report["val_accuracy"]
    assert json.loads(result.read_text())["confusion"] == report["confusion"]


def test_train_sweep_emits_four_reports(workspace):
    out = workspace / "sweep"
    assert run("train", "--data", workspace / "data", "--L", "3,5,7,10", "--epochs", 1, "--out", out) == 0
    for L in (3, 5, 7, 10):
        assert json.loads((out / f"L{L}" / "report.json").read_text())["L"] == L
    assert len(json.loads((out / "sweep.json").read_text())) == 4


def test_train_cnn_lstm(workspace):
    out = workspace / "lstm"
    assert run("train", "--data", workspace / "data", "--model-kind", "cnn_lstm", "--L", 5,
               "--epochs", 1, "--out", out) == 0
    assert json.loads((out / "report.json").read_text())["model_kind"] == "cnn_lstm"


def test_train_refuses_dropped_frames(workspace):
    assert run("train", "--data", workspace / "dropped", "--epochs", 1, "--out", workspace / "x") == 3


def test_segment_command(tmp_path):
    mixed, noise = tmp_path / "mixed", tmp_path / "noise"
    assert run("simulate", "--mixed", "--out", mixed, "--count", 3, "--seed", 1) == 0
    assert run("simulate", "--out", noise, "--classes", "Noise", "--count", 2, "--frames", 12) == 0
    det = tmp_path / "det"
    assert run("train", "--data", mixed, "--model-kind", "noise_detector", "--L", 1,
               "--epochs", 6, "--out", det) == 0
    out = tmp_path / "seg.json"
    assert run("segment", "--data", noise, "--detector", det, "--out", out) == 0
    result = json.loads(out.read_text())["sequences"]
    for segs in result.values():
        jsonschema.validate(segs, SEGMENTS_SCHEMA)
        assert segs == [{"start": 0, "end": 11, "kind": "Noise"}]
    assert run("segment", "--data", noise, "--detector", tmp_path / "missing", "--out", out) == 3


def test_infer_stream_from_script(workspace, tmp_path):
    script = make_gesture(Gesture.SWIPE, RadarConfig(), seed=2, duration_frames=20)
    src = tmp_path / "swipe.json"
    src.write_text(script.to_json())
    out = tmp_path / "stream.json"
    assert run("infer-stream", "--weights", workspace / "model7", "--source", src,
               "--quiet", "--json-out", out) == 0
    result = json.loads(out.read_text())
    assert result["frames"] == 20 and result["windows"] == 14
    assert result["latency_ms"]["max"] < 100.0
    assert {e["truth"] for e in result["events"]} == {"Swipe"}


def test_infer_stream_simulator(workspace, capsys):
    assert run("infer-stream", "--weights", workspace / "model7", "--duration-s", 3, "--no-serial") == 0
    lines = capsys.readouterr().out.splitlines()
    assert sum(line.startswith("t=") for line in lines) == 24 - 6


def test_bench_pipeline_command(tmp_path):
    out = tmp_path / "bench.json"
    assert run("bench-pipeline", "--items", 12, "--out", out) == 0
    result = json.loads(out.read_text())
    assert result["stage_costs_ms"] == [40.0, 80.0, 30.0]
    assert result["speedup"] > 1.2


def test_config_precedence(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"pipeline": {"drop_prob": 0.5}, "train": {"epochs": 3}}))
    parser_args = ["--config", cfg, "--epochs", "7"]
    from mmgesture.cli import build_parser, load_run_config

    args = build_parser().parse_args(["bench-pipeline", *map(str, parser_args)])
    rc = load_run_config(args)
    assert rc.pipeline.drop_prob == 0.5  # from file
    assert rc.train.epochs == 7  # flag wins
    assert rc.radar == RadarConfig()  # defaults
    assert RunConfig.from_dict(rc.to_dict()) == rc


@pytest.mark.parametrize("doc", [
    {"radar": {"bogus": 1}},
    {"extra_section": {}},
    {"train": {"epochs": "many"}},
    {"radar": {"bandwidth_hz": -1}},
])
def test_config_errors_exit_2(tmp_path, doc):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps(doc))
    assert run("simulate", "--out", tmp_path / "o", "--config", cfg) == 2


def test_unreadable_config_exit_2(tmp_path):
    (tmp_path / "c.json").write_text("{not json")
    assert run("bench-pipeline", "--config", tmp_path / "c.json") == 2


def test_data_error_exit_3(tmp_path):
    assert run("restore", "--data", tmp_path / "nothing", "--out", tmp_path / "o") == 3
    (tmp_path / "d" / "sequences").mkdir(parents=True)
    assert run("simulate", "--out", tmp_path / "d", "--count", 1) == 0
    next((tmp_path / "d" / "sequences").iterdir()).write_bytes(b"RDTF garbage")
    assert run("restore", "--data", tmp_path / "d", "--out", tmp_path / "o") == 3


def test_runtime_failure_exit_4(tmp_path):
    assert run("simulate", "--out", tmp_path, "--count", 1, "--frames", 5) == 0
    # a 5-frame dataset cannot be windowed to L=7
    assert run("train", "--data", tmp_path, "--L", 7, "--epochs", 1, "--out", tmp_path / "m") == 4


def test_console_script_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mmgesture.cli", "bench-pipeline", "--items", "3",
                           "--costs-ms", "1,2,1"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["stage_costs_ms"] == [1.0, 2.0, 1.0]
