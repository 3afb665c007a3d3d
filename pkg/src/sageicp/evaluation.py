"""KITTI relative-error metrics over 100-800 m sub-trajectories."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

SEGMENT_LENGTHS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0)
# start frames are sampled every STEP frames, as in the KITTI development kit
DEFAULT_STEP = 10


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class SegmentError:
    first_frame: int
    length: float
    t_err_pct: float
    r_err_deg_per_m: float


@dataclass(frozen=True)
class Summary:
    rte_pct: float
    rre_deg_per_100m: float
    n_segments: int

    @property
    def empty(self) -> bool:
        return self.n_segments == 0

    def __str__(self) -> str:
        if self.empty:
            return "no segments"
        return f"{self.rte_pct:.2f} / {self.rre_deg_per_100m:.2f}"


def path_lengths(poses: np.ndarray) -> np.ndarray:
    steps = np.linalg.norm(np.diff(poses[:, :3, 3], axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def _inv(m: np.ndarray) -> np.ndarray:
    out = np.eye(4)
    R = m[:3, :3]
    out[:3, :3] = R.T
    out[:3, 3] = -R.T @ m[:3, 3]
    return out


def _angle(R: np.ndarray) -> float:
    """Rotation angle from the clamped trace, paired with the skew part so that
    near-identity errors do not bottom out at acos round-off (~1e-8 rad)."""
    c = max(-1.0, min(1.0, 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)))
    s = 0.5 * math.sqrt((R[2, 1] - R[1, 2]) ** 2 + (R[0, 2] - R[2, 0]) ** 2 + (R[1, 0] - R[0, 1]) ** 2)
    return math.atan2(s, c)


def segment_errors(
    gt: np.ndarray,
    est: np.ndarray,
    lengths: Sequence[float] = SEGMENT_LENGTHS,
    step: int = DEFAULT_STEP,
) -> list[SegmentError]:
    gt = np.asarray(gt, dtype=np.float64)
    est = np.asarray(est, dtype=np.float64)
    if len(gt) != len(est):
        raise AlignmentError(f"trajectory lengths differ: {len(gt)} ground-truth vs {len(est)} estimated poses")
    if len(gt) < 2:
        raise AlignmentError("need at least two poses")
    dist = path_lengths(gt)
    out = []
    for i in range(0, len(gt), step):
        for L in lengths:
            j = int(np.searchsorted(dist, dist[i] + L, side="left"))
            # first crossing of the travelled length, measured as a difference
            while j - 1 > i and dist[j - 1] - dist[i] >= L:
                j -= 1
            while j < len(dist) and dist[j] - dist[i] < L:
                j += 1
            if j >= len(dist):
                continue
            gt_rel = _inv(gt[i]) @ gt[j]
            est_rel = _inv(est[i]) @ est[j]
            E = _inv(gt_rel) @ est_rel
            t_err = float(np.linalg.norm(E[:3, 3]))
            r_err = math.degrees(_angle(E[:3, :3]))
            out.append(SegmentError(i, float(L), 100.0 * t_err / L, r_err / L))
    return out


def summarize(errors: Sequence[SegmentError]) -> Summary:
    if not errors:
        return Summary(float("nan"), float("nan"), 0)
    t = np.mean([e.t_err_pct for e in errors])
    r = np.mean([e.r_err_deg_per_m for e in errors])
    return Summary(float(t), float(r) * 100.0, len(errors))


def errors_csv(errors: Sequence[SegmentError]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["start_frame", "length_m", "rte_pct", "rre_deg_per_m"])
    for e in errors:
        w.writerow([e.first_frame, f"{e.length:g}", repr(e.t_err_pct), repr(e.r_err_deg_per_m)])
    return buf.getvalue()


def report_table(errors: Sequence[SegmentError]) -> str:
    """Per-length mean errors, the data behind an error-vs-length plot."""
    lines = [f"{'length_m':>9} {'segments':>9} {'rte_pct':>9} {'rre_deg/100m':>13}"]
    for L in sorted({e.length for e in errors}):
        sel = [e for e in errors if e.length == L]
        lines.append(
            f"{L:9.0f} {len(sel):9d} {np.mean([e.t_err_pct for e in sel]):9.4f} "
            f"{100.0 * np.mean([e.r_err_deg_per_m for e in sel]):13.4f}"
        )
    s = summarize(errors)
    lines.append(f"{'all':>9} {s.n_segments:9d} {s.rte_pct:9.4f} {s.rre_deg_per_100m:13.4f}")
    return "\n".join(lines) + "\n"
