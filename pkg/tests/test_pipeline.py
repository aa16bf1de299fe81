import threading
import time

import numpy as np
import pytest

from mmgesture.pipeline import (
    PipelineError,
    StagePipeline,
    bench_pipeline,
    run_pipeline,
    run_serial,
    sleeping_stage,
)


def add(k):
    return lambda x: x + k


def test_single_item_equals_composition():
    stages = [add(1), lambda x: x * 3, add(-2)]
    out, stats = run_pipeline([5], stages)
    assert out == [(5 + 1) * 3 - 2]
    assert stats.items == 1


def test_matches_serial_and_preserves_order():
    stages = [add(1), lambda x: x * 2, str]
    items = list(range(200))
    piped, _ = run_pipeline(items, stages, queue_capacity=2)
    serial, _ = run_serial(items, stages)
    assert piped == serial


@pytest.mark.parametrize("capacity", [1, 4])
def test_order_under_jitter(capacity):
    stages = [sleeping_stage(0.0, 0.002, seed=s) for s in range(3)]
    out, _ = run_pipeline(range(150), stages, queue_capacity=capacity)
    assert out == list(range(150))


def test_queue_bound_limits_inflight():
    inflight, peak, lock = [0], [0], threading.Lock()

    def produce(x):
        with lock:
            inflight[0] += 1
            peak[0] = max(peak[0], inflight[0])
        return x

    def slow_consume(x):
        time.sleep(0.002)
        with lock:
            inflight[0] -= 1
        return x

    run_pipeline(range(60), [produce, slow_consume], queue_capacity=2)
    # one item per queue slot, plus the one each worker is holding
    assert peak[0] <= 2 + 2


def test_stage_failure_propagates():
    def boom(x):
        if x == 7:
            raise ZeroDivisionError("bad frame")
        return x

    with pytest.raises(PipelineError) as info:
        run_pipeline(range(20), [add(0), boom, add(0)], names=["a", "b", "c"])
    assert info.value.stage == "b"
    assert info.value.index == 7
    assert isinstance(info.value.__cause__, ZeroDivisionError)


def test_source_failure_propagates():
    def source():
        yield 1
        raise OSError("device lost")

    with pytest.raises(PipelineError, match="device lost"):
        run_pipeline(source(), [add(0), add(0)])


def test_empty_source_and_validation():
    out, stats = run_pipeline([], [add(1)])
    assert out == [] and stats.items == 0
    with pytest.raises(ValueError):
        StagePipeline([add(1)], queue_capacity=0)
    with pytest.raises(ValueError):
        StagePipeline([])


def test_early_close_stops_workers():
    pipe = StagePipeline([sleeping_stage(0.001), add(0)], queue_capacity=1)
    gen = pipe.stream(range(10_000))
    assert next(gen) == 0
    gen.close()
    time.sleep(0.1)
    assert not any(t.name in ("stage0", "stage1") and t.is_alive() for t in threading.enumerate())


def test_stats_shape():
    _, stats = run_pipeline(range(5), [add(1), add(1)], names=["x", "y"])
    d = stats.to_dict()
    assert d["items"] == 5
    assert set(d["stages"]) == {"x", "y"}
    assert d["stages"]["x"]["count"] == 5
    assert d["end_to_end"]["p95_ms"] >= 0


def test_bench_throughput():
    result = bench_pipeline((0.04, 0.08, 0.03), n_items=20)
    assert result["serial"]["items_per_s"] == pytest.approx(1 / 0.15, rel=0.1)
    # the 80 ms stage bounds pipelined throughput near 12.5 items/s
    assert result["pipelined"]["items_per_s"] >= 10.0
    assert result["speedup"] >= 1.5


def test_capacity_one_still_correct():
    stages = [sleeping_stage(0.005), sleeping_stage(0.01), sleeping_stage(0.005)]
    out, stats = run_pipeline(range(20), stages, queue_capacity=1)
    assert out == list(range(20))
    assert stats.items_per_s > 0
