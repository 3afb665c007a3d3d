import numpy as np
import pytest

from sageicp.config import RunConfig
from sageicp.geometry import poses_to_array
from sageicp.pipeline import Odometry, run_batch
from sageicp.streaming import FileLabelProvider, SimulatedLatencyLabelProvider, run_streaming
from sageicp.synthetic import street_sequence

CFG = RunConfig(vertical_correction_deg=0.0)


@pytest.fixture(scope="module")
def drive():
    return street_sequence(n_frames=12, n_points=2500, seed=5)


def tiny_frames(n):
    rng = np.random.default_rng(0)
    base = rng.uniform(-10, 10, size=(400, 3))
    return [(base + rng.normal(scale=0.01, size=base.shape), np.full(400, 40)) for _ in range(n)]


def test_instant_labels_one_period_delay():
    r = run_streaming(tiny_frames(12), Odometry(CFG), SimulatedLatencyLabelProvider(0), 100)
    assert r.output_period_ms == pytest.approx(100.0)
    assert r.steady_delay_ms == pytest.approx(100.0)


def test_file_provider_no_delay():
    r = run_streaming(tiny_frames(6), Odometry(CFG), FileLabelProvider(), 100)
    assert np.all(r.delay_ms == 0.0) and r.throughput_ok


def test_paired_latency_gives_fixed_delay():
    r = run_streaming(tiny_frames(20), Odometry(CFG), SimulatedLatencyLabelProvider(200), 100)
    assert r.output_period_ms == pytest.approx(100.0, abs=5)
    assert r.steady_delay_ms == pytest.approx(300.0, abs=10)
    assert r.delay_spread_ms <= 10 and r.throughput_ok and not r.messages


def test_overload_reported_not_deadlocked():
    r = run_streaming(tiny_frames(20), Odometry(CFG), SimulatedLatencyLabelProvider(300), 100)
    assert not r.throughput_ok
    assert r.messages and "throughput violation" in r.messages[0]
    assert len(r.poses) == 20


def test_odd_frame_count_flushes_last_frame():
    r = run_streaming(tiny_frames(5), Odometry(CFG), SimulatedLatencyLabelProvider(200), 100)
    assert len(r.poses) == 5 and np.all(np.diff(r.published_ms) >= 100)


def test_stream_equals_batch(drive):
    batch, _ = run_batch(drive.frames, CFG)
    r = run_streaming(drive.frames, Odometry(CFG), SimulatedLatencyLabelProvider(200), 100)
    assert poses_to_array(batch).tobytes() == poses_to_array(r.poses).tobytes()


def test_errors_in_source_propagate():
    def frames():
        yield from tiny_frames(2)
        raise RuntimeError("disk vanished")

    with pytest.raises(RuntimeError, match="disk vanished"):
        run_streaming(frames(), Odometry(CFG), SimulatedLatencyLabelProvider(200), 100)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        SimulatedLatencyLabelProvider(-1)
    with pytest.raises(ValueError):
        run_streaming([], Odometry(CFG), period_ms=0)
