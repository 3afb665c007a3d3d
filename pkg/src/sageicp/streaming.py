"""Three-stage streaming mode with a simulated-latency label provider.

Stage 1 acquires scans at the publish period, stage 2 labels them two at a time
with a fixed latency per pair, stage 3 re-publishes labelled frames one period
apart, and the calling thread registers them. The stages run as threads joined
by bounded queues; time is a simulated clock carried on each frame, so the
timing report is deterministic and label latency never changes pose values.
"""
from __future__ import annotations

import queue
import threading
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from sageicp.pipeline import FrameDiagnostics, Odometry

_DONE = object()


@dataclass
class StampedFrame:
    index: int
    points: np.ndarray
    labels: np.ndarray | None
    arrival_ms: float
    labelled_ms: float = 0.0
    published_ms: float = 0.0


class FileLabelProvider:
    """Labels read from disk: available as soon as the scan is."""

    latency_ms = 0.0
    batch = 1

    def finish_times(self, arrivals: list[float], busy_until: float) -> list[float]:
        return [max(a, busy_until) for a in arrivals]


class SimulatedLatencyLabelProvider:
    """Stands in for the segmentation network: frames go through in pairs, each
    pair occupying the provider for ``latency_ms`` once both frames are in."""

    batch = 2

    def __init__(self, latency_ms: float):
        if latency_ms < 0:
            raise ValueError("latency must be non-negative")
        self.latency_ms = float(latency_ms)

    def finish_times(self, arrivals: list[float], busy_until: float) -> list[float]:
        start = max(max(arrivals), busy_until)
        return [start + self.latency_ms] * len(arrivals)


@dataclass
class StreamingReport:
    poses: list
    diagnostics: list[FrameDiagnostics]
    arrival_ms: np.ndarray
    published_ms: np.ndarray
    output_period_ms: float
    delay_ms: np.ndarray
    steady_delay_ms: float
    delay_spread_ms: float
    max_backlog: int
    throughput_ok: bool
    messages: list[str] = field(default_factory=list)


def _put(q: queue.Queue, item, stop: threading.Event) -> bool:
    while not stop.is_set():
        try:
            q.put(item, timeout=0.1)
            return True
        except queue.Full:
            continue
    return False


def run_streaming(
    frames: Iterable,
    odometry: Odometry,
    provider=None,
    period_ms: float = 100.0,
    queue_capacity: int = 2,
) -> StreamingReport:
    if period_ms <= 0:
        raise ValueError("publish period must be positive")
    provider = provider or FileLabelProvider()
    q_raw: queue.Queue = queue.Queue(maxsize=queue_capacity)
    q_labelled: queue.Queue = queue.Queue(maxsize=queue_capacity)
    q_out: queue.Queue = queue.Queue(maxsize=queue_capacity)
    stop = threading.Event()
    errors: list[BaseException] = []

    def acquire():
        try:
            for k, (pts, labs) in enumerate(frames):
                if not _put(q_raw, StampedFrame(k, pts, labs, k * period_ms), stop):
                    return
        except BaseException as exc:  # surfaced in the caller
            errors.append(exc)
        _put(q_raw, _DONE, stop)

    def label():
        busy = 0.0
        pending: list[StampedFrame] = []
        while True:
            item = q_raw.get()
            if item is not _DONE:
                pending.append(item)
            if pending and (item is _DONE or len(pending) == provider.batch):
                times = provider.finish_times([f.arrival_ms for f in pending], busy)
                for f, t in zip(pending, times):
                    f.labelled_ms = t
                    busy = max(busy, t)
                    if not _put(q_labelled, f, stop):
                        return
                pending = []
            if item is _DONE:
                _put(q_labelled, _DONE, stop)
                return

    def publish():
        last = None
        while True:
            item = q_labelled.get()
            if item is _DONE:
                _put(q_out, _DONE, stop)
                return
            t = item.labelled_ms if last is None else max(item.labelled_ms, last + period_ms)
            item.published_ms = last = t
            if not _put(q_out, item, stop):
                return

    workers = [threading.Thread(target=fn, daemon=True) for fn in (acquire, label, publish)]
    for w in workers:
        w.start()
    out: list[StampedFrame] = []
    diags: list[FrameDiagnostics] = []
    try:
        while True:
            item = q_out.get()
            if item is _DONE:
                break
            _, diag = odometry.process_scan(item.points, item.labels, item.index)
            diags.append(diag)
            out.append(item)
    finally:
        stop.set()
        for w in workers:
            w.join(timeout=5.0)
    if errors:
        raise errors[0]
    return _report(odometry, out, diags, provider, period_ms)


def _report(odometry, out, diags, provider, period_ms) -> StreamingReport:
    arrival = np.array([f.arrival_ms for f in out])
    labelled = np.array([f.labelled_ms for f in out])
    published = np.array([f.published_ms for f in out])
    delay = published - arrival
    n = len(out)
    half = n // 2
    steady = slice(half, None)
    period = float(np.mean(np.diff(published[steady]))) if n - half >= 2 else float("nan")
    steady_delay = float(np.median(delay[steady])) if n else float("nan")
    spread = float(np.ptp(delay[steady])) if n else 0.0
    # frames that have arrived but are not yet labelled, seen at each arrival instant
    backlog = int(max((np.sum((arrival <= a) & (labelled > a)) for a in arrival), default=0))
    messages = []
    sustainable = provider.latency_ms <= provider.batch * period_ms
    growing = n >= 4 and delay[-1] - delay[half] > 0.5 * period_ms
    ok = sustainable and not growing
    if not ok:
        messages.append(
            f"throughput violation: labelling takes {provider.latency_ms:g} ms per "
            f"{provider.batch} frame(s) but frames arrive every {period_ms:g} ms; "
            f"delay grew from {delay[half]:.0f} to {delay[-1]:.0f} ms, backlog up to {backlog}"
        )
    return StreamingReport(
        poses=list(odometry.poses),
        diagnostics=diags,
        arrival_ms=arrival,
        published_ms=published,
        output_period_ms=period,
        delay_ms=delay,
        steady_delay_ms=steady_delay,
        delay_spread_ms=spread,
        max_backlog=backlog,
        throughput_ok=ok,
        messages=messages,
    )
