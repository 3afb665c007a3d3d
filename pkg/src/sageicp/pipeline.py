"""Per-scan odometry: correct, filter, subsample, register, then update the map."""
from __future__ import annotations

import json
import time
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from sageicp.association import AdaptiveThreshold
from sageicp.config import RunConfig
from sageicp.geometry import Pose, azimuth_phase, correct_vertical_angle, deskew
from sageicp.io import FrameMismatchError
from sageicp.preprocess import remove_dynamic, semantic_subsample, voxel_downsample
from sageicp.registration import ICPParams, register_scan
from sageicp.taxonomy import strip_far_labels
from sageicp.voxel_map import AdaptiveVoxelMap

STAGES = ("prepare", "rdi", "downsampling", "optimization", "update")


@dataclass
class FrameDiagnostics:
    frame: int
    pose: list[float]
    timings_ms: dict[str, float]
    points_in: int = 0
    points_registered: int = 0
    correspondences: int = 0
    iterations: int = 0
    degenerate: bool = False
    tau: float = 0.0
    instances_kept: int = 0
    instances_removed: int = 0
    instance_scores: list[float] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


class Odometry:
    """Owns the map, the adaptive threshold and the last two poses of one sequence.

    ``baseline=True`` ignores labels entirely and runs the plain geometric
    variant: uniform subsampling, plain nearest neighbours, capped buckets.
    """

    def __init__(self, config: RunConfig | None = None, baseline: bool = False):
        self.config = config or RunConfig()
        self.baseline = baseline
        cfg = self.config
        ab = cfg.ablation
        self.use_rdi = ab.rdi and not baseline
        self.use_ss = ab.ss and not baseline
        self.use_saa = ab.saa and not baseline
        self.use_avm = ab.avm and not baseline
        self.voxel_map = AdaptiveVoxelMap(
            cfg.map_voxel_size, cfg.n1, cfg.n2, cfg.r_max, cfg.taxonomy, adaptive=self.use_avm
        )
        self.threshold = AdaptiveThreshold(cfg.tau0, cfg.delta_min, cfg.r_max)
        self.icp = ICPParams(cfg.max_iterations, cfg.convergence_eps, cfg.fixed_kernel)
        self.history: deque[Pose] = deque(maxlen=2)
        self.poses: list[Pose] = []
        self.frame_count = 0

    def last_delta(self) -> Pose:
        if len(self.history) < 2:
            return Pose.identity()
        return self.history[0].inverse() @ self.history[1]

    def predict(self) -> Pose:
        if not self.history:
            return Pose.identity()
        return self.history[-1] @ self.last_delta()

    def process_scan(self, points, labels=None, frame_index: int | None = None):
        cfg = self.config
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if labels is None or self.baseline:
            labs = np.zeros(len(pts), dtype=np.int64)
        else:
            labs = np.asarray(labels, dtype=np.int64).reshape(-1)
        if len(labs) != len(pts):
            raise FrameMismatchError(f"{len(pts)} points but {len(labs)} labels")
        if not np.all(np.isfinite(pts)):
            raise ValueError("scan contains non-finite coordinates")
        frame = self.frame_count if frame_index is None else frame_index
        timings = dict.fromkeys(STAGES, 0.0)

        t0 = time.perf_counter()
        prediction = self.predict()
        if cfg.vertical_correction_deg:
            pts = correct_vertical_angle(pts, cfg.vertical_correction_deg)
        if cfg.deskew:
            pts = deskew(pts, azimuth_phase(pts), self.last_delta())
        if not self.baseline:
            labs = strip_far_labels(pts, labs, cfg.label_strip_range)
        t1 = time.perf_counter()
        timings["prepare"] = (t1 - t0) * 1e3

        scores: list[float] = []
        kept = removed = 0
        if self.use_rdi:
            report = remove_dynamic(
                pts, labs, cfg.taxonomy, cfg.theta0, cfg.d_r,
                cfg.cluster_tolerance, cfg.cluster_min_size,
            )
            pts, labs = pts[report.keep], labs[report.keep]
            scores = [d.score for d in report.decisions]
            kept, removed = report.instances_kept, report.instances_removed
        t2 = time.perf_counter()
        timings["rdi"] = (t2 - t1) * 1e3

        if self.use_ss:
            idx = semantic_subsample(pts, labs, cfg.group_sizes(), cfg.taxonomy)
        else:
            idx = voxel_downsample(pts, cfg.uniform_voxel_size)
        src, src_labels = pts[idx], labs[idx]
        t3 = time.perf_counter()
        timings["downsampling"] = (t3 - t2) * 1e3

        tau = self.threshold.tau
        gamma0 = cfg.gamma0 if self.use_saa else 1.0
        result = register_scan(src, src_labels, self.voxel_map, prediction, tau, gamma0, self.icp)
        pose = prediction if result.degenerate else result.pose
        t4 = time.perf_counter()
        timings["optimization"] = (t4 - t3) * 1e3

        self.threshold.update(prediction.inverse() @ pose)
        self.voxel_map.insert_scan(pose.apply(src), src_labels, pose)
        self.history.append(pose)
        self.poses.append(pose)
        self.frame_count += 1
        timings["update"] = (time.perf_counter() - t4) * 1e3

        diag = FrameDiagnostics(
            frame=int(frame),
            pose=[float(v) for v in pose.matrix[:3, :4].reshape(-1)],
            timings_ms=timings,
            points_in=int(len(points)),
            points_registered=int(len(src)),
            correspondences=result.correspondences,
            iterations=result.iterations,
            degenerate=result.degenerate,
            tau=float(tau),
            instances_kept=kept,
            instances_removed=removed,
            instance_scores=scores,
        )
        return pose, diag


def run_batch(frames, config: RunConfig | None = None, baseline: bool = False):
    """Process ``(points, labels)`` frames in order; returns poses and diagnostics."""
    odom = Odometry(config, baseline=baseline)
    diags = []
    for points, labels in frames:
        _, diag = odom.process_scan(points, labels)
        diags.append(diag)
    return odom.poses, diags
