import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from mmgesture import store
from mmgesture.config import RadarConfig
from mmgesture.datasets import simulate_dataset
from mmgesture.models import build_cnn_lstm, build_tiny_cnn
from mmgesture.nn import forward
from mmgesture.restore import inject_drops
from mmgesture.tensorfile import TensorFileError, decode_tensor, encode_tensor, read_tensor, write_tensor


@settings(max_examples=50, deadline=None)
@given(st.sampled_from([np.float32, np.float64]).flatmap(
    lambda dt: arrays(dt, array_shapes(min_dims=0, max_dims=4, max_side=5))))
def test_roundtrip_bitwise(arr):
    out, header = decode_tensor(encode_tensor(arr))
    assert out.dtype == arr.dtype
    assert out.shape == arr.shape
    assert out.tobytes() == arr.tobytes()  # NaN payloads included


def test_layout_and_header(tmp_path):
    arr = np.arange(6, dtype=np.float32).reshape(2, 3)
    path = write_tensor(tmp_path / "t.rdtf", arr, ["a", "b"], {"classes": ["x"]}, {"k": 1}, {"id": "s"})
    blob = path.read_bytes()
    magic, version, head_len = struct.unpack_from("<4sHI", blob)
    assert (magic, version) == (b"RDTF", 1)
    assert len(blob) == 10 + head_len + arr.size * 4
    out, header = read_tensor(path)
    np.testing.assert_array_equal(out, arr)
    assert header["axes"] == ["a", "b"] and header["meta"] == {"id": "s"} and header["config"] == {"k": 1}


def test_rejects_bad_input():
    with pytest.raises(TensorFileError):
        encode_tensor(np.arange(3))  # integer dtype
    with pytest.raises(TensorFileError):
        encode_tensor(np.zeros((2, 2)), axes=["only-one"])
    blob = encode_tensor(np.zeros(4))
    with pytest.raises(TensorFileError):
        decode_tensor(b"XXXX" + blob[4:])
    with pytest.raises(TensorFileError):
        decode_tensor(blob[:-1])
    with pytest.raises(TensorFileError):
        decode_tensor(blob[:5])
    with pytest.raises(TensorFileError):
        decode_tensor(blob[:4] + struct.pack("<H", 9) + blob[6:])


def test_sequence_roundtrip_with_drops(tmp_path):
    cfg = RadarConfig()
    seq = inject_drops(simulate_dataset(cfg, 1, 8, seed=0)[0].sequence, 0.3, seed=1)
    store.save_sequence(tmp_path / "s.rdtf", seq, cfg, "s0")
    back, header = store.load_sequence(tmp_path / "s.rdtf")
    assert back.values().tobytes() == seq.values().tobytes()
    np.testing.assert_array_equal(back.drop_mask, seq.drop_mask)
    assert back.label == seq.label
    assert header["meta"]["id"] == "s0"


def test_load_sequence_errors(tmp_path):
    (tmp_path / "junk.rdtf").write_bytes(b"nope")
    with pytest.raises(store.DataError):
        store.load_sequence(tmp_path / "junk.rdtf")
    write_tensor(tmp_path / "flat.rdtf", np.zeros(3))
    with pytest.raises(store.DataError):
        store.load_sequence(tmp_path / "flat.rdtf")
    with pytest.raises(store.DataError):
        store.read_manifest(tmp_path)


@pytest.mark.parametrize("builder", [lambda: build_tiny_cnn(3, seed=1), lambda: build_cnn_lstm(3, seed=1)])
def test_model_roundtrip(tmp_path, builder):
    model = builder()
    store.save_model(tmp_path / "m", model)
    back = store.load_model(tmp_path / "m")
    x = np.random.default_rng(0).normal(size=(2,) + model.input_shape)
    assert forward(back, x)[0].tobytes() == forward(model, x)[0].tobytes()
    assert back.meta == model.meta


def test_load_model_missing(tmp_path):
    with pytest.raises(store.DataError):
        store.load_model(tmp_path)
