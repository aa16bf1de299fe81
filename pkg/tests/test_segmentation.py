import json

import jsonschema
import numpy as np
import pytest

from mmgesture.config import RadarConfig
from mmgesture.datasets import random_mixed_parts, simulate_mixed, simulate_sequence
from mmgesture.restore import RdiSequence, inject_drops
from mmgesture.segmentation import (
    SEGMENTS_SCHEMA,
    HysteresisState,
    Segment,
    clean_motion_mask,
    hysteresis_filter,
    motion_frames,
    segment,
    segments_from_mask,
    segments_to_json,
    smooth_labels,
    train_noise_detector,
)
from mmgesture.sim import Gesture


def training_frames(cfg, n_seq=60, seed=11):
    rng = np.random.default_rng(seed)
    frames, noise = [], []
    for i in range(n_seq):
        sim = simulate_mixed(random_mixed_parts(rng), cfg, 50_000 + i)
        frames.append(sim.sequence.values())
        noise += [g is Gesture.NOISE for g in sim.frame_labels]
    return np.concatenate(frames), np.array(noise)


@pytest.fixture(scope="module")
def detector():
    cfg = RadarConfig()
    x, y = training_frames(cfg)
    model, report = train_noise_detector(x, y, seed=0)
    return model, report


def test_detector_heldout_accuracy(detector):
    _, report = detector
    assert report.val_accuracy >= 0.95


def test_detector_rejects_single_class():
    x = np.zeros((10, 9, 49))
    with pytest.raises(ValueError):
        train_noise_detector(x, np.zeros(10, bool))


def test_detector_deterministic():
    cfg = RadarConfig()
    x, y = training_frames(cfg, n_seq=6)
    hyper_models = [train_noise_detector(x, y, seed=3)[0] for _ in range(2)]
    for (_, a), (_, b) in zip(hyper_models[0].state(), hyper_models[1].state()):
        assert a.tobytes() == b.tobytes()


def test_all_noise_single_segment(detector):
    model, _ = detector
    seq = simulate_sequence(Gesture.NOISE, RadarConfig(), seed=77, frames=25).sequence
    segs = segment(seq, model)
    assert segs == [Segment(0, 24, "Noise")]


def test_constructed_boundaries(detector):
    model, _ = detector
    parts = [(Gesture.NOISE, 10), (Gesture.SWIPE, 20), (Gesture.NOISE, 10)]
    sim = simulate_mixed(parts, RadarConfig(), seed=123)
    motion = [s for s in segment(sim.sequence, model) if s.kind == "Motion"]
    assert len(motion) == 1
    assert abs(motion[0].start_index - 10) <= 1
    assert abs(motion[0].end_index - 29) <= 1


def test_dropped_frames_keep_nominal_coverage(detector):
    model, _ = detector
    parts = [(Gesture.NOISE, 10), (Gesture.PULL_PUSH, 20), (Gesture.NOISE, 10)]
    seq = inject_drops(simulate_mixed(parts, RadarConfig(), seed=5).sequence, 0.15, seed=2)
    segs = segment(seq, model)
    assert segs[0].start_index == 0 and segs[-1].end_index == 39
    for a, b in zip(segs, segs[1:]):
        assert b.start_index == a.end_index + 1 and a.kind != b.kind


def test_flips_absorbed():
    flips = np.array([i % 2 == 0 for i in range(20)])
    cleaned = clean_motion_mask(flips, 3)
    assert len(segments_from_mask(cleaned)) <= 3


def test_clean_mask_rules():
    m = np.array([0, 1, 1, 1, 1, 0, 1, 1, 1, 1, 0, 0, 0, 1, 0], bool)
    out = clean_motion_mask(m, 3)
    # the interior 1-frame gap closes, the lone trailing motion frame goes
    np.testing.assert_array_equal(out, [0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0])


def test_segments_partition():
    segs = segments_from_mask(np.array([0, 0, 1, 1, 1, 0], bool))
    assert [s.to_dict() for s in segs] == [
        {"start": 0, "end": 1, "kind": "Noise"},
        {"start": 2, "end": 4, "kind": "Motion"},
        {"start": 5, "end": 5, "kind": "Noise"},
    ]
    jsonschema.validate(json.loads(segments_to_json(segs)), SEGMENTS_SCHEMA)


def test_segment_validation():
    with pytest.raises(ValueError):
        Segment(3, 2, "Motion")
    with pytest.raises(ValueError):
        Segment(0, 2, "Gesture")
    assert len(Segment(2, 4, "Noise")) == 3
    assert Segment.from_dict({"start": 1, "end": 2, "kind": "Motion"}) == Segment(1, 2, "Motion")


def test_motion_frames():
    seq = RdiSequence.from_array(np.arange(6 * 2 * 2, dtype=float).reshape(6, 2, 2), label="Swipe")
    kept = motion_frames(seq, [Segment(0, 1, "Noise"), Segment(2, 4, "Motion"), Segment(5, 5, "Noise")])
    assert len(kept) == 3
    np.testing.assert_array_equal(kept.values(), seq.values()[2:5])


def test_segment_min_len_validation(detector):
    with pytest.raises(ValueError):
        segment(RdiSequence.from_array(np.zeros((3, 9, 49))), detector[0], min_motion_len=0)


# -- hysteresis ----------------------------------------------------------------------


def test_single_glitch_suppressed():
    assert smooth_labels(list("AABAA"), 3) == list("AAAAA")


def test_k1_identity():
    stream = list("ABCABBAC")
    assert smooth_labels(stream, 1) == stream


def test_switch_after_k():
    assert smooth_labels(list("ABBB"), 3) == list("AAAB")


def test_interrupted_streak_resets():
    assert smooth_labels(list("AABBCBBB"), 3) == list("AAAAAAAB")


def test_state_invariant_and_validation():
    state = HysteresisState(threshold_k=3)
    for lab in "AABBAB":
        state, _ = hysteresis_filter(state, lab)
        if state.candidate_label is not None:
            assert 0 <= state.streak_count < state.threshold_k
    with pytest.raises(ValueError):
        HysteresisState(threshold_k=0)


@pytest.mark.parametrize("seed", range(5))
def test_transitions_persist_k(seed):
    rng = np.random.default_rng(seed)
    raw = list(rng.choice(list("ABC"), size=300, p=[0.6, 0.3, 0.1]))
    out = smooth_labels(raw, 3)
    changes = [i for i in range(1, len(out)) if out[i] != out[i - 1]]
    # a label that was switched to is held for at least K windows
    assert all(b - a >= 3 for a, b in zip(changes, changes[1:]))
    assert smooth_labels(raw + ["C"] * 3, 3)[-1] == "C"
