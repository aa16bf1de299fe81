import numpy as np
import pytest

from mmgesture.config import RadarConfig
from mmgesture.datasets import simulate_dataset
from mmgesture.models import (
    CLASS_NAMES,
    TrainConfig,
    TrainingError,
    build_cnn_lstm,
    build_dataset,
    build_model,
    build_noise_detector,
    build_tiny_cnn,
    confusion_matrix,
    evaluate,
    infer_window,
    prepare_input,
    stratified_split,
    train,
)
from mmgesture.nn import Dropout, forward, grad_check


@pytest.fixture(scope="module")
def small_data():
    sims = simulate_dataset(RadarConfig(), 12, 10, seed=3)
    return [s.sequence for s in sims]


@pytest.mark.parametrize("L, lo, hi", [(5, 2000, 2600), (7, 5400, 6600), (10, 14000, 18000)])
def test_tiny_cnn_budget(L, lo, hi):
    assert lo <= build_tiny_cnn(L).param_count() <= hi


def test_tiny_cnn_counts_increase_with_L():
    counts = [build_tiny_cnn(L).param_count() for L in (3, 5, 7, 10)]
    assert counts == sorted(counts) and len(set(counts)) == 4


def test_tiny_cnn_shapes():
    m = build_tiny_cnn(7)
    assert m.input_shape == (63, 49, 1)
    assert m.output_shape == (5,)
    assert m.meta["widths"] == [8, 12, 16]
    with pytest.raises(ValueError):
        build_tiny_cnn(0)


def test_cnn_lstm_contract():
    m = build_cnn_lstm(5)
    assert m.input_shape == (5, 9, 49, 1)
    assert m.output_shape == (5,)
    assert m.param_count() <= 20_000
    dense_feature = [l for l in m.layers if l.kind == "Dense"][0]
    assert dense_feature.n_out == 16
    assert any(isinstance(l, Dropout) and l.p == 0.5 for l in m.layers)


def test_build_model_dispatch():
    assert build_model("tiny_cnn", 3).meta["kind"] == "tiny_cnn"
    assert build_model("cnn_lstm", 3).meta["kind"] == "cnn_lstm"
    assert build_model("noise_detector", 1).output_shape == (2,)
    with pytest.raises(ValueError):
        build_model("resnet", 3)


def test_reduced_width_grad_checks():
    r = np.random.default_rng(0)
    tiny = build_tiny_cnn(2, widths=(2, 2, 3), seed=1)
    x = r.normal(size=(4, 2, 9, 49))
    assert grad_check(tiny, prepare_input(tiny, x), np.array([0, 1, 2, 3]), max_per_tensor=40) < 1e-4
    lstm = build_cnn_lstm(3, seed=1, widths={"c1": 2, "c2": 2, "feature": 4, "hidden": 3})
    x = r.normal(size=(3, 3, 9, 49))
    assert grad_check(lstm, prepare_input(lstm, x), np.array([0, 4, 2]), max_per_tensor=40) < 1e-4


def test_prepare_input_layouts():
    w = np.arange(2 * 3 * 9 * 49, dtype=float).reshape(2, 3, 9, 49)
    stacked = prepare_input(build_tiny_cnn(3), w)
    assert stacked.shape == (2, 27, 49, 1)
    np.testing.assert_array_equal(stacked[0, 9:18, :, 0], w[0, 1])
    assert prepare_input(build_cnn_lstm(3), w).shape == (2, 3, 9, 49, 1)


def test_standardized_input_gain_invariance():
    m = build_tiny_cnn(3, seed=4)
    x = prepare_input(m, np.random.default_rng(1).normal(size=(6, 3, 9, 49)) * 10)
    a = forward(m, x)[0].argmax(1)
    b = forward(m, x + 37.0)[0].argmax(1)
    np.testing.assert_array_equal(a, b)


def test_stratified_split_balanced_and_disjoint():
    y = np.repeat(np.arange(5), 20)
    tr, va = stratified_split(y, 0.2, seed=0)
    assert np.intersect1d(tr, va).size == 0
    assert len(tr) + len(va) == 100
    assert np.all(np.bincount(y[va]) == 4)


def test_build_dataset(small_data):
    ds = build_dataset(small_data, L=5, seed=0)
    assert ds.x.shape == (60, 5, 9, 49)
    assert len(ds.val_idx) == 5 * round(12 * 0.2)
    aug = build_dataset(small_data, L=5, seed=0, augment_factor=3)
    np.testing.assert_array_equal(aug.split("val")[0], ds.split("val")[0])
    assert len(aug.train_idx) == 3 * len(ds.train_idx)
    with pytest.raises(ValueError):
        build_dataset(small_data, L=11)


def test_untrained_model_near_chance(small_data):
    ds = build_dataset(small_data, L=3, seed=0, val_fraction=0.5)
    accs = [evaluate(build_tiny_cnn(3, seed=s), *ds.split("val"))[1] for s in range(8)]
    assert np.mean(accs) == pytest.approx(0.2, abs=0.1)


def test_training_improves_and_is_deterministic(small_data):
    ds = build_dataset(small_data, L=3, seed=0)
    hyper = TrainConfig(epochs=4, batch_size=16)
    reports, models = [], []
    for _ in range(2):
        m = build_tiny_cnn(3, seed=2)
        reports.append(train(m, ds, hyper))
        models.append(m)
    assert reports[0].val_accuracy == reports[1].val_accuracy
    assert reports[0].confusion == reports[1].confusion
    for (_, a), (_, b) in zip(models[0].state(), models[1].state()):
        assert a.tobytes() == b.tobytes()
    assert reports[0].epochs[-1]["train_loss"] < reports[0].epochs[0]["train_loss"]
    assert reports[0].confusion_csv().startswith("true\\pred," + ",".join(CLASS_NAMES))
    assert len(reports[0].epochs) == 4


def test_training_error_on_non_finite_loss(small_data):
    ds = build_dataset(small_data, L=3, seed=0)
    ds.x[ds.train_idx[0], 0, 0, 0] = np.nan
    m = build_tiny_cnn(3, seed=0)
    with pytest.raises(TrainingError, match="non-finite loss"):
        train(m, ds, TrainConfig(epochs=1, batch_size=len(ds.train_idx)))


def test_confusion_matrix_rows():
    cm = confusion_matrix([0, 0, 1, 1], [0, 1, 1, 1], 3)
    np.testing.assert_allclose(cm, [[0.5, 0.5, 0], [0, 1, 0], [0, 0, 0]])


def test_infer_window(small_data):
    m = build_tiny_cnn(3, seed=0, dtype=np.float32)
    window = small_data[0].values()[:3]
    label, conf, ms = infer_window(m, window)
    assert label in CLASS_NAMES
    assert 0.0 < conf <= 1.0
    assert ms >= 0.0
    assert infer_window(m, window)[:2] == (label, conf)
    with pytest.raises(ValueError):
        infer_window(m, small_data[0].values()[:4])


def test_tiny_cnn_latency():
    m = build_tiny_cnn(7, dtype=np.float32)
    window = np.random.default_rng(0).normal(size=(7, 9, 49))
    infer_window(m, window)
    best = min(infer_window(m, window)[2] for _ in range(10))
    assert best < 10.0


def test_noise_detector_shape():
    m = build_noise_detector()
    assert m.input_shape == (9, 49, 1)
    assert m.meta["classes"] == ["Motion", "Noise"]
