"""Per-frame preprocessing: parked-vs-moving vehicle filtering and class-wise voxel subsampling."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from sageicp.kernels import pack_keys, voxel_coords
from sageicp.taxonomy import DEFAULT_TAXONOMY, ClassGroup, ClassTaxonomy


@dataclass
class Instance:
    indices: np.ndarray
    label: int

    def __len__(self) -> int:
        return len(self.indices)


def euclidean_cluster(
    points: np.ndarray,
    tolerance: float,
    min_size: int,
    labels: np.ndarray | None = None,
) -> tuple[list[Instance], np.ndarray]:
    """Connected components of the graph joining points at distance <= ``tolerance``.

    Returns the instances with at least ``min_size`` members, ordered by their
    smallest member index, and the indices of points in smaller components.
    """
    if tolerance <= 0:
        raise ValueError("cluster tolerance must be positive")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    if n == 0:
        return [], np.zeros(0, dtype=np.int64)
    pairs = cKDTree(pts).query_pairs(tolerance, output_type="ndarray")
    graph = coo_matrix(
        (np.ones(len(pairs), dtype=np.int8), (pairs[:, 0], pairs[:, 1])), shape=(n, n)
    )
    _, comp = connected_components(graph, directed=False)
    order = np.argsort(comp, kind="stable")
    bounds = np.flatnonzero(np.diff(comp[order])) + 1
    instances, rejected = [], []
    for members in np.split(order, bounds):
        if len(members) < min_size:
            rejected.append(members)
            continue
        if labels is None:
            label = 0
        else:
            vals, cnt = np.unique(np.asarray(labels)[members], return_counts=True)
            label = int(vals[np.argmax(cnt)])
        instances.append(Instance(np.sort(members), label))
    instances.sort(key=lambda inst: int(inst.indices[0]))
    rej = np.sort(np.concatenate(rejected)) if rejected else np.zeros(0, dtype=np.int64)
    return instances, rej


class StaticIndex:
    """KD-tree over the static points of one frame."""

    def __init__(self, points: np.ndarray, labels: np.ndarray):
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        self.labels = np.asarray(labels)
        self._tree = cKDTree(self.points) if len(self.points) else None

    def __len__(self) -> int:
        return len(self.points)

    def query_radius(self, queries: np.ndarray, radius: float) -> np.ndarray:
        """Sorted, de-duplicated indices of points within ``radius`` (inclusive) of any query."""
        if self._tree is None or len(queries) == 0:
            return np.zeros(0, dtype=np.int64)
        hits = self._tree.query_ball_point(np.asarray(queries).reshape(-1, 3), radius)
        if len(hits) == 0:
            return np.zeros(0, dtype=np.int64)
        flat = np.concatenate([np.asarray(h, dtype=np.int64) for h in hits])
        return np.unique(flat)


def stationarity_score(
    instance_points: np.ndarray,
    index: StaticIndex,
    radius: float,
    landmark_table: np.ndarray,
) -> float:
    """Share of landmark-class points among the static points near an instance."""
    near = index.query_radius(instance_points, radius)
    if len(near) == 0:
        return 0.0
    landmarks = landmark_table[np.asarray(index.labels[near], dtype=np.int64)]
    return float(np.count_nonzero(landmarks)) / float(len(near))


@dataclass
class InstanceDecision:
    size: int
    label: int
    score: float
    kept: bool


@dataclass
class DynamicRemovalReport:
    keep: np.ndarray
    decisions: list[InstanceDecision] = field(default_factory=list)
    always_dynamic_removed: int = 0
    small_clusters_removed: int = 0

    @property
    def instances_kept(self) -> int:
        return sum(d.kept for d in self.decisions)

    @property
    def instances_removed(self) -> int:
        return sum(not d.kept for d in self.decisions)


def remove_dynamic(
    points: np.ndarray,
    labels: np.ndarray,
    taxonomy: ClassTaxonomy = DEFAULT_TAXONOMY,
    theta0: float = 0.5,
    d_r: float = 1.5,
    tolerance: float = 0.5,
    min_size: int = 10,
) -> DynamicRemovalReport:
    """Survivor mask: static points, plus vehicle instances scoring strictly above ``theta0``."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    labs = np.asarray(labels, dtype=np.int64)
    always = taxonomy.always_dynamic_table[labs]
    candidates = np.flatnonzero(taxonomy.dynamic_table[labs])
    static = taxonomy.static_table[labs]
    keep = static.copy()
    report = DynamicRemovalReport(keep=keep, always_dynamic_removed=int(np.count_nonzero(always)))
    if len(candidates) == 0:
        return report
    instances, rejected = euclidean_cluster(pts[candidates], tolerance, min_size, labs[candidates])
    report.small_clusters_removed = len(rejected)
    static_idx = StaticIndex(pts[static], labs[static])
    for inst in instances:
        members = candidates[inst.indices]
        score = stationarity_score(pts[members], static_idx, d_r, taxonomy.landmark_table)
        kept = score > theta0
        if kept:
            keep[members] = True
        report.decisions.append(InstanceDecision(len(members), inst.label, score, kept))
    return report


def voxel_downsample(points: np.ndarray, voxel_size: float) -> np.ndarray:
    """Indices of the first point (input order) in every occupied voxel, ascending."""
    if voxel_size <= 0:
        raise ValueError("voxel size must be positive")
    pts = np.asarray(points).reshape(-1, 3)
    if len(pts) == 0:
        return np.zeros(0, dtype=np.int64)
    keys = pack_keys(voxel_coords(pts, voxel_size))
    _, first = np.unique(keys, return_index=True)
    return np.sort(first)


def semantic_subsample(
    points: np.ndarray,
    labels: np.ndarray,
    sizes: Mapping[ClassGroup, float],
    taxonomy: ClassTaxonomy = DEFAULT_TAXONOMY,
) -> np.ndarray:
    """Indices surviving per-group voxel subsampling, grouped in ``ClassGroup`` order."""
    pts = np.asarray(points).reshape(-1, 3)
    groups = taxonomy.groups_of(labels)
    picked = []
    for group in ClassGroup:
        members = np.flatnonzero(groups == group)
        if len(members):
            picked.append(members[voxel_downsample(pts[members], sizes[group])])
    return np.concatenate(picked) if picked else np.zeros(0, dtype=np.int64)
