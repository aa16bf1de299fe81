"""``mmgesture`` command line: simulate, inject-drops, restore, segment, train, eval,
infer-stream, bench-pipeline.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import store
from .config import RadarConfig
from .datasets import random_mixed_parts, simulate_dataset, simulate_mixed
from .models import (
    CLASS_NAMES,
    GestureDataset,
    TrainConfig,
    TrainingError,
    build_dataset,
    build_model,
    evaluate,
    stratified_split,
    train,
)
from .pipeline import PipelineError, bench_pipeline
from .restore import inject_drops, restore_sequence
from .segmentation import _stack_windows, segment
from .sim import GESTURES, Gesture, GestureScript
from .tensorfile import TensorFileError

log = logging.getLogger("mmgesture")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class PipelineSettings:
    queue_capacity: int = 4
    hysteresis_k: int = 3
    min_motion_len: int = 3
    drop_prob: float = 0.1
    burst_len: float = 1.0


@dataclass
class RunConfig:
    radar: RadarConfig = field(default_factory=RadarConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    pipeline: PipelineSettings = field(default_factory=PipelineSettings)

    SECTIONS = {"radar": RadarConfig, "train": TrainConfig, "pipeline": PipelineSettings}

    @classmethod
    def from_dict(cls, data: dict, overrides: dict | None = None) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("run config must be a JSON object")
        unknown = set(data) - set(cls.SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        built = {}
        for name, typ in cls.SECTIONS.items():
            section = dict(data.get(name, {}))
            if not isinstance(section, dict):
                raise ConfigError(f"section {name!r} must be an object")
            fields = {f.name: f for f in dataclasses.fields(typ)}
            bad = set(section) - set(fields)
            if bad:
                raise ConfigError(f"unknown keys in {name!r}: {sorted(bad)}")
            section.update((overrides or {}).get(name, {}))
            for key, value in section.items():
                section[key] = _coerce(f"{name}.{key}", value, fields[key].default)
            try:
                built[name] = typ(**section)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid {name!r} settings: {exc}") from None
        return cls(**built)

    def to_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in self.SECTIONS}


def _coerce(key, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    return value


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _config_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", type=Path, help="JSON run configuration")
    parent.add_argument("-v", "--verbose", action="store_true")
    for section, typ in RunConfig.SECTIONS.items():
        group = parent.add_argument_group(f"{section} settings")
        for f in dataclasses.fields(typ):
            if section == "train" and f.name == "seed":
                continue  # --seed is per-command
            kind = type(f.default)
            group.add_argument(_flag(f.name), dest=f"{section}.{f.name}", default=None,
                               type=kind, metavar=kind.__name__.upper())
    return parent


def load_run_config(args) -> RunConfig:
    data = {}
    if args.config is not None:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    overrides: dict[str, dict] = {}
    for key, value in vars(args).items():
        if "." in key and value is not None:
            section, name = key.split(".", 1)
            overrides.setdefault(section, {})[name] = value
    return RunConfig.from_dict(data, overrides)


def _classes(text: str | None) -> list[Gesture]:
    if not text:
        return list(GESTURES)
    try:
        return [Gesture.parse(t.strip()) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _lengths(text: str) -> list[int]:
    try:
        values = [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"bad sequence length list {text!r}") from None
    if not values or min(values) < 1:
        raise ConfigError("sequence lengths must be positive integers")
    return values


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- commands -----------------------------------------------------------------


def cmd_simulate(args, rc: RunConfig) -> int:
    cfg = rc.radar
    classes = _classes(args.classes)
    if args.count < 1 or args.frames < 1:
        raise ConfigError("--count and --frames must be >= 1")
    entries = []
    if args.mixed:
        rng = np.random.default_rng(args.seed)
        for i in range(args.count * len(classes)):
            parts = random_mixed_parts(rng)
            sim = simulate_mixed(parts, cfg, args.seed * 1_000_003 + i)
            truth = [g.value for g in sim.frame_labels]
            entries.append((f"seq_{i:05d}", sim.sequence, sim.script,
                            {"frame_labels": truth, "parts": sim.script.meta["parts"]}))
    else:
        sims = simulate_dataset(cfg, args.count, args.frames, args.seed, classes)
        entries = [(f"seq_{i:05d}", s.sequence, s.script, None) for i, s in enumerate(sims)]
    info = {"seed": args.seed, "frames": args.frames, "mixed": bool(args.mixed)}
    manifest = store.write_dataset(args.out, entries, cfg, info, CLASS_NAMES)
    print(f"wrote {len(entries)} sequences to {args.out}; histogram {manifest['histogram']}")
    return EXIT_OK


def _copy_entries(data_dir, transform):
    entries = []
    for rec, seq, script in store.iter_dataset(data_dir):
        extra = {k: rec[k] for k in ("frame_labels", "parts") if k in rec}
        entries.append((rec["id"], transform(rec, seq), script, extra or None))
    return entries


def cmd_inject_drops(args, rc: RunConfig) -> int:
    p = rc.pipeline
    manifest = store.read_manifest(args.data)
    cfg = RadarConfig.from_dict(manifest["config"])
    per_seq = []

    def drop(rec, seq):
        out = inject_drops(seq, p.drop_prob, args.seed * 1_000_003 + len(per_seq), p.burst_len)
        per_seq.append({"id": rec["id"], "nominal_length": out.nominal_length,
                        "dropped": out.num_dropped,
                        "dropped_indices": [int(i) for i in np.flatnonzero(out.drop_mask)]})
        return out

    entries = _copy_entries(args.data, drop)
    info = {k: manifest[k] for k in ("seed", "frames", "mixed") if k in manifest}
    info["drops"] = {"drop_prob": p.drop_prob, "burst_len": p.burst_len, "seed": args.seed}
    store.write_dataset(args.out, entries, cfg, info, manifest["classes"])
    total = sum(s["nominal_length"] for s in per_seq)
    dropped = sum(s["dropped"] for s in per_seq)
    stats = {"sequences": len(per_seq), "total_frames": total, "dropped_frames": dropped,
             "drop_rate": dropped / total if total else 0.0, "drop_prob": p.drop_prob,
             "burst_len": p.burst_len, "per_sequence": per_seq}
    _write_json(Path(args.out) / "drop_stats.json", stats)
    print(f"dropped {dropped}/{total} frames ({stats['drop_rate']:.3f})")
    return EXIT_OK


def cmd_restore(args, rc: RunConfig) -> int:
    manifest = store.read_manifest(args.data)
    cfg = RadarConfig.from_dict(manifest["config"])
    per_seq = []

    def fix(rec, seq):
        if len(seq) == 0:
            raise store.DataError(f"sequence {rec['id']} has no received frames")
        out = restore_sequence(seq, fps=cfg.frame_rate_fps)
        per_seq.append({"id": rec["id"], "received": len(seq), "restored": len(out)})
        return out

    entries = _copy_entries(args.data, fix)
    info = {k: manifest[k] for k in ("seed", "frames", "mixed") if k in manifest}
    info["restored_from"] = str(args.data)
    store.write_dataset(args.out, entries, cfg, info, manifest["classes"])
    stats = {"sequences": len(per_seq),
             "received_frames": sum(s["received"] for s in per_seq),
             "restored_frames": sum(s["restored"] for s in per_seq),
             "per_sequence": per_seq}
    _write_json(Path(args.out) / "restore_stats.json", stats)
    print(f"restored {stats['received_frames']} -> {stats['restored_frames']} frames")
    return EXIT_OK


def _load_sequences(data_dir):
    seqs = []
    for rec, seq, _ in store.iter_dataset(data_dir):
        # mixed recordings carry per-frame truth; keep it for the noise detector
        truth = rec.get("frame_labels")
        if truth is not None:
            received = np.asarray(truth)[seq.nominal_indices]
            for rdi, lab in zip(seq.frames, received):
                rdi.label = str(lab)
        seqs.append(seq)
    if not seqs:
        raise store.DataError(f"dataset {data_dir} is empty")
    return seqs


def _detector_dataset(seqs, seed: int, val_fraction: float, window: int = 1) -> GestureDataset:
    frames, labels = [], []
    for seq in seqs:
        if not len(seq):
            continue
        values = seq.values()
        frames.append(_stack_windows(values, window))
        labels.append(np.array([int((f.label or seq.label) == Gesture.NOISE.value)
                                for f in seq.frames]))
    x, y = np.concatenate(frames), np.concatenate(labels)
    if len(np.unique(y)) < 2:
        raise store.DataError("noise detector needs both noise and motion sequences")
    train_idx, val_idx = stratified_split(y, val_fraction, seed)
    return GestureDataset(x, y, train_idx, val_idx, seed, ["Motion", "Noise"])


def _dataset_for(kind: str, seqs, L: int, seed: int, hyper: TrainConfig, augment: bool = True):
    if kind == "noise_detector":
        return _detector_dataset(seqs, seed, hyper.val_fraction, L)
    if any(s.num_dropped for s in seqs):
        raise store.DataError("dataset has dropped frames; run `restore` first")
    return build_dataset(seqs, L, seed, hyper.val_fraction,
                         augment_factor=hyper.augment_factor if augment else 1)


def cmd_train(args, rc: RunConfig) -> int:
    seqs = _load_sequences(args.data)
    cfg = store.dataset_config(args.data)
    lengths = _lengths(args.L)
    hyper = dataclasses.replace(rc.train, seed=args.seed)
    out = Path(args.out)
    summary = []
    for L in lengths:
        dataset = _dataset_for(args.model_kind, seqs, L, args.seed, hyper)
        dtype = np.float64 if args.float64 else np.float32
        try:
            model = build_model(args.model_kind, L, cfg, seed=args.seed, dtype=dtype)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        model.meta["split"] = {"seed": args.seed, "val_fraction": hyper.val_fraction}

        def progress(rec, L=L):
            print(f"[{args.model_kind} L={L}] epoch {rec['epoch']:3d}  "
                  f"train {rec['train_accuracy']:.4f}  val {rec['val_accuracy']:.4f}  "
                  f"({rec['seconds']:.1f}s)", flush=True)

        report = train(model, dataset, hyper, progress=progress)
        target = out / f"L{L}" if len(lengths) > 1 else out
        store.save_model(target, model)
        _write_json(target / "report.json", report.to_dict())
        (target / "confusion.csv").write_text(report.confusion_csv())
        summary.append({"L": L, "param_count": report.param_count, "val_accuracy": report.val_accuracy,
                        "dir": str(target)})
        print(f"{args.model_kind} L={L}: params={report.param_count} "
              f"val_accuracy={report.val_accuracy:.4f} -> {target}")
    if len(lengths) > 1:
        _write_json(out / "sweep.json", summary)
    return EXIT_OK


def cmd_eval(args, rc: RunConfig) -> int:
    model = store.load_model(args.weights)
    seqs = _load_sequences(args.data)
    kind, L = model.meta.get("kind"), int(model.meta.get("L", 1))
    split = model.meta.get("split", {})
    seed = int(split.get("seed", 0))
    hyper = dataclasses.replace(rc.train, val_fraction=float(split.get("val_fraction", 0.2)))
    dataset = _dataset_for(kind, seqs, L, seed, hyper, augment=False)
    x_val, y_val = dataset.split("val")
    confusion, acc = evaluate(model, x_val, y_val)
    classes = model.meta.get("classes", CLASS_NAMES)
    result = {"model_kind": kind, "L": L, "param_count": model.param_count(), "val_accuracy": acc,
              "confusion": confusion.tolist(), "classes": classes, "samples": int(len(y_val))}
    if args.out:
        _write_json(Path(args.out), result)
    print(f"{kind} L={L}: val_accuracy={acc:.6f} on {len(y_val)} samples")
    return EXIT_OK


def cmd_segment(args, rc: RunConfig) -> int:
    if not Path(args.detector).exists():
        raise store.DataError(f"detector weights {args.detector} not found")
    detector = store.load_model(args.detector)
    result = {}
    for rec, seq, _ in store.iter_dataset(args.data):
        segs = segment(seq, detector, rc.pipeline.min_motion_len)
        result[rec["id"]] = [s.to_dict() for s in segs]
    _write_json(Path(args.out), {"min_motion_len": rc.pipeline.min_motion_len, "sequences": result})
    n_motion = sum(s["kind"] == "Motion" for segs in result.values() for s in segs)
    print(f"segmented {len(result)} sequences; {n_motion} motion segments -> {args.out}")
    return EXIT_OK


def cmd_infer_stream(args, rc: RunConfig) -> int:
    from .stream import run_stream, script_tasks, simulator_tasks

    model = store.load_model(args.weights)
    cfg = rc.radar
    if args.source == "simulator":
        tasks = simulator_tasks(cfg, args.seed, args.duration_s)
    else:
        path = Path(args.source)
        try:
            tasks = script_tasks(GestureScript.from_json(path.read_text()))
        except (OSError, ValueError, KeyError) as exc:
            raise store.DataError(f"cannot read gesture script {path}: {exc}") from None

    def show(ev):
        if not args.quiet:
            print(f"t={ev['timestamp_s']:7.3f}s frame={ev['frame_index']:5d} label={ev['label']:<11s} "
                  f"raw={ev['raw']:<11s} conf={ev['confidence']:.3f} "
                  f"infer={ev['infer_ms']:.2f}ms e2e={ev['e2e_ms']:.2f}ms", flush=True)

    events, summary = run_stream(model, cfg, tasks, args.seed, rc.pipeline.hysteresis_k,
                                 rc.pipeline.queue_capacity, args.realtime, show,
                                 serial_baseline=not args.no_serial)
    result = summary.to_dict()
    print(json.dumps({k: result[k] for k in ("frames", "windows", "latency_ms", "raw_accuracy",
                                             "stable_accuracy", "speedup_vs_serial")}, indent=2))
    if args.json_out:
        result["events"] = events
        _write_json(Path(args.json_out), result)
    return EXIT_OK


def cmd_bench_pipeline(args, rc: RunConfig) -> int:
    try:
        costs = [float(c) / 1e3 for c in args.costs_ms.split(",")]
    except ValueError:
        raise ConfigError(f"bad --costs-ms {args.costs_ms!r}") from None
    result = bench_pipeline(costs, args.items, rc.pipeline.queue_capacity)
    text = json.dumps(result, indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parent = _config_parent()
    parser = argparse.ArgumentParser(prog="mmgesture", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[parent], help="synthesize a labelled RDI dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--classes", default=None, help="comma-separated gesture classes (default: all five)")
    p.add_argument("--count", type=int, default=10, help="sequences per class")
    p.add_argument("--frames", type=int, default=10, help="frames per sequence")
    p.add_argument("--mixed", action="store_true", help="[noise | gesture | noise] sequences")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("inject-drops", parents=[parent], help="randomly drop frames")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_inject_drops)

    p = sub.add_parser("restore", parents=[parent], help="restore dropped frames")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("segment", parents=[parent], help="noise/motion segmentation")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--detector", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("train", parents=[parent], help="train a classifier")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--model-kind", choices=["tiny_cnn", "cnn_lstm", "noise_detector"], default="tiny_cnn")
    p.add_argument("--L", default="7", help="sequence length, or comma list for a sweep")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--float64", action="store_true", help="train in double precision")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[parent], help="evaluate saved weights on the validation split")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--weights", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer-stream", parents=[parent], help="live pipelined inference")
    p.add_argument("--weights", type=Path, required=True)
    p.add_argument("--source", default="simulator", help="'simulator' or a gesture script JSON")
    p.add_argument("--duration-s", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--realtime", action="store_true", help="pace capture at the frame rate")
    p.add_argument("--no-serial", action="store_true", help="skip the serial baseline run")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--json-out", type=Path, default=None)
    p.set_defaults(func=cmd_infer_stream)

    p = sub.add_parser("bench-pipeline", parents=[parent], help="serial vs pipelined throughput")
    p.add_argument("--costs-ms", default="40,80,30")
    p.add_argument("--items", type=int, default=30)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_bench_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = load_run_config(args)
        return args.func(args, rc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (store.DataError, TensorFileError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, PipelineError, RuntimeError, ValueError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
