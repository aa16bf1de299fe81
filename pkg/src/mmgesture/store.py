"""On-disk layout for datasets (manifest + scripts + RDTF sequences) and model weights."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import RadarConfig
from .nn import Model
from .restore import RdiSequence
from .sim import GestureScript
from .tensorfile import TensorFileError, read_tensor, write_tensor

DATASET_FORMAT = "mmgesture-dataset"
AXES = ["frame", "range", "doppler"]


class DataError(RuntimeError):
    """Malformed or missing dataset / weight files."""


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def save_sequence(path, seq: RdiSequence, cfg: RadarConfig, seq_id: str, classes=None,
                  extra: dict | None = None):
    values = seq.values() if len(seq) else np.zeros((0, cfg.num_range_bins, cfg.num_doppler_bins))
    meta = {"id": seq_id, "label": seq.label, "drop_mask": [bool(b) for b in seq.drop_mask]}
    meta.update(extra or {})
    write_tensor(path, values.astype(np.float64), AXES, {"classes": classes}, cfg.to_dict(), meta)


def load_sequence(path) -> tuple[RdiSequence, dict]:
    try:
        values, header = read_tensor(path)
    except (OSError, TensorFileError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    meta = header.get("meta") or {}
    if values.ndim != 3:
        raise DataError(f"{path}: expected (frame, range, doppler) tensor, got {values.shape}")
    fps = (header.get("config") or {}).get("frame_rate_fps", 8.0)
    try:
        seq = RdiSequence.from_array(values, label=meta.get("label"),
                                     drop_mask=meta.get("drop_mask"), fps=fps)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return seq, header


def write_dataset(out_dir, entries, cfg: RadarConfig, info: dict, classes) -> dict:
    """Write ``entries`` of ``(seq_id, RdiSequence, GestureScript | None, extra)`` plus a manifest."""
    out = Path(out_dir)
    (out / "sequences").mkdir(parents=True, exist_ok=True)
    records, histogram = [], {c: 0 for c in classes}
    for seq_id, seq, script, extra in entries:
        rec = {"id": seq_id, "label": seq.label, "tensor": f"sequences/{seq_id}.rdtf",
               "nominal_length": seq.nominal_length, "dropped": seq.num_dropped}
        save_sequence(out / rec["tensor"], seq, cfg, seq_id, classes, extra)
        if script is not None:
            (out / "scripts").mkdir(exist_ok=True)
            rec["script"] = f"scripts/{seq_id}.json"
            (out / rec["script"]).write_text(script.to_json() + "\n")
        if extra:
            rec.update(extra)
        histogram[seq.label] = histogram.get(seq.label, 0) + 1
        records.append(rec)
    manifest = {"format": DATASET_FORMAT, "version": 1, "config": cfg.to_dict(),
                "classes": list(classes), "histogram": histogram, "sequences": records, **info}
    (out / "manifest.json").write_text(_dump(manifest))
    return manifest


def read_manifest(data_dir) -> dict:
    path = Path(data_dir) / "manifest.json"
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read dataset manifest {path}: {exc}") from exc
    if manifest.get("format") != DATASET_FORMAT:
        raise DataError(f"{path} is not a {DATASET_FORMAT} manifest")
    return manifest


def iter_dataset(data_dir):
    """Yield ``(record, RdiSequence, GestureScript | None)`` for every manifest entry."""
    data_dir = Path(data_dir)
    manifest = read_manifest(data_dir)
    for rec in manifest["sequences"]:
        seq, _ = load_sequence(data_dir / rec["tensor"])
        script = None
        if rec.get("script"):
            script = GestureScript.from_json((data_dir / rec["script"]).read_text())
        yield rec, seq, script


def dataset_config(data_dir) -> RadarConfig:
    return RadarConfig.from_dict(read_manifest(data_dir)["config"])


def save_model(out_dir, model: Model) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    state = model.state()
    flat = np.concatenate([v.reshape(-1) for _, v in state]) if state else np.zeros(0)
    entries, offset = [], 0
    for name, v in state:
        entries.append({"name": name, "shape": list(v.shape), "offset": offset})
        offset += v.size
    write_tensor(out / "weights.rdtf", flat.astype(model.dtype), ["value"],
                 meta={"tensors": entries})
    (out / "model.json").write_text(_dump(model.manifest()))
    return out


def load_model(model_dir) -> Model:
    model_dir = Path(model_dir)
    try:
        manifest = json.loads((model_dir / "model.json").read_text())
        flat, header = read_tensor(model_dir / "weights.rdtf")
    except (OSError, json.JSONDecodeError, TensorFileError) as exc:
        raise DataError(f"cannot load model from {model_dir}: {exc}") from exc
    model = Model.from_manifest(manifest)
    arrays = {}
    for entry in header["meta"]["tensors"]:
        size = int(np.prod(entry["shape"], dtype=np.int64))
        arrays[entry["name"]] = flat[entry["offset"]:entry["offset"] + size].reshape(entry["shape"])
    model.load_state(arrays)
    return model
