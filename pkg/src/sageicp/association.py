"""Label-aware nearest-neighbour data association and the adaptive distance gate."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from sageicp import kernels
from sageicp.geometry import Pose, rotation_angle
from sageicp.voxel_map import AdaptiveVoxelMap


def gamma(label_a: int, label_b: int, gamma0: float) -> float:
    if label_a == label_b or label_a * label_b == 0:
        return gamma0
    return 1.0


class Correspondence(NamedTuple):
    source: np.ndarray
    source_label: int
    target: np.ndarray
    target_label: int
    distance: float


@dataclass
class Correspondences:
    """Matched pairs in scan order; ``source`` is in the scan frame."""

    source_index: np.ndarray
    source: np.ndarray
    source_labels: np.ndarray
    target: np.ndarray
    target_labels: np.ndarray
    distance: np.ndarray
    # (row, slot) of the target inside the map's bucket storage
    target_row: np.ndarray
    target_slot: np.ndarray

    def __len__(self) -> int:
        return len(self.source_index)

    def __iter__(self):
        for i in range(len(self)):
            yield Correspondence(
                self.source[i], int(self.source_labels[i]),
                self.target[i], int(self.target_labels[i]), float(self.distance[i]),
            )


def find_correspondences(
    points: np.ndarray,
    labels: np.ndarray,
    voxel_map: AdaptiveVoxelMap,
    pose: Pose,
    tau: float,
    gamma0: float,
) -> Correspondences:
    """Semantic NN for every scan point under ``pose``, gated on plain distance < ``tau``.

    ``gamma0 = 1`` turns this into a plain nearest-neighbour search.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    labs = np.ascontiguousarray(labels, dtype=np.int64).reshape(-1)
    moved = np.ascontiguousarray(pose.apply(pts))
    sorted_keys, sorted_rows, slot_pts, slot_labs, counts = voxel_map.kernel_args()
    rows, slots, dist = kernels.semantic_nn(
        moved, labs, sorted_keys, sorted_rows, slot_pts, slot_labs, counts,
        voxel_map.voxel_size, float(gamma0),
    )
    idx = np.nonzero((rows >= 0) & (dist < tau))[0]
    r, s = rows[idx], slots[idx]
    return Correspondences(
        source_index=idx,
        source=pts[idx],
        source_labels=labs[idx],
        target=slot_pts[r, s],
        target_labels=slot_labs[r, s].astype(np.int64),
        distance=dist[idx],
        target_row=r,
        target_slot=s,
    )


def semantic_nn(point, label: int, voxel_map: AdaptiveVoxelMap, pose: Pose, tau: float,
                gamma0: float) -> Correspondence | None:
    found = find_correspondences(
        np.asarray(point, dtype=np.float64).reshape(1, 3), np.array([label]),
        voxel_map, pose, tau, gamma0,
    )
    return next(iter(found), None)


def model_deviation(delta: Pose, r_max: float) -> float:
    """Largest displacement ``delta`` can cause for a point within ``r_max``."""
    theta = rotation_angle(delta.rotation)
    return float(np.linalg.norm(delta.translation)) + 2.0 * r_max * math.sin(0.5 * theta)


class AdaptiveThreshold:
    def __init__(self, tau0: float = 2.0, delta_min: float = 0.1, r_max: float = 100.0):
        self.tau0 = tau0
        self.delta_min = delta_min
        self.r_max = r_max
        self.sum_sq = 0.0
        self.count = 0

    @property
    def tau(self) -> float:
        if self.count == 0:
            return self.tau0
        return 3.0 * math.sqrt(self.sum_sq / self.count)

    def add_deviation(self, delta: float) -> float:
        if delta > self.delta_min:
            self.sum_sq += delta * delta
            self.count += 1
        return self.tau

    def update(self, delta: Pose) -> float:
        return self.add_deviation(model_deviation(delta, self.r_max))

    def copy(self) -> "AdaptiveThreshold":
        other = AdaptiveThreshold(self.tau0, self.delta_min, self.r_max)
        other.sum_sq, other.count = self.sum_sq, self.count
        return other
