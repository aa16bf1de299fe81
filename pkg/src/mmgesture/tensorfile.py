"""RDTF: a small self-describing binary tensor format.

Layout::

    b"RDTF"            magic
    u16                format version
    u32                header length in bytes
    <header>           UTF-8 JSON: dtype ("f32" | "f64"), shape, axes, labels, config, meta
    <payload>          little-endian row-major values

All integers are little-endian.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"RDTF"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")
_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


class TensorFileError(ValueError):
    pass


def encode_tensor(array, axes=None, labels=None, config=None, meta=None) -> bytes:
    arr = np.asarray(array)
    if arr.dtype == np.float32:
        tag = "f32"
    elif arr.dtype == np.float64:
        tag = "f64"
    else:
        raise TensorFileError(f"unsupported dtype {arr.dtype}; use float32 or float64")
    if axes is not None and len(axes) != arr.ndim:
        raise TensorFileError(f"{len(axes)} axis names for a {arr.ndim}-d tensor")
    header = {
        "dtype": tag,
        "shape": list(arr.shape),
        "axes": list(axes) if axes is not None else None,
        "labels": labels,
        "config": config,
        "meta": meta or {},
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes()
    return _PREFIX.pack(MAGIC, VERSION, len(head)) + head + payload


def decode_tensor(blob: bytes) -> tuple[np.ndarray, dict]:
    if len(blob) < _PREFIX.size:
        raise TensorFileError("truncated RDTF prefix")
    magic, version, head_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise TensorFileError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TensorFileError(f"unsupported RDTF version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(blob[start:start + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TensorFileError(f"corrupt header: {exc}") from None
    if header.get("dtype") not in _DTYPES:
        raise TensorFileError(f"unknown dtype {header.get('dtype')!r}")
    dtype = _DTYPES[header["dtype"]]
    shape = tuple(int(d) for d in header["shape"])
    payload = blob[start + head_len:]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(payload) != expected:
        raise TensorFileError(f"payload is {len(payload)} bytes, header implies {expected}")
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    return arr, header


def write_tensor(path, array, axes=None, labels=None, config=None, meta=None) -> Path:
    path = Path(path)
    path.write_bytes(encode_tensor(array, axes, labels, config, meta))
    return path


def read_tensor(path) -> tuple[np.ndarray, dict]:
    return decode_tensor(Path(path).read_bytes())
