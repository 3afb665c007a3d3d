"""Hash-grid local map with capacity-tiered, label-aware buckets.

Buckets live in fixed-width slot arrays (one row per voxel) so the kernels can
walk them without Python objects. A sorted copy of the voxel keys serves as the
hash index; row order never influences results.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from sageicp import kernels
from sageicp.geometry import Pose
from sageicp.kernels import neighbor_offsets, pack_keys, unpack_keys, voxel_coords
from sageicp.taxonomy import DEFAULT_TAXONOMY, ClassTaxonomy


def _position(p) -> np.ndarray:
    if isinstance(p, Pose):
        return p.translation
    return np.asarray(p, dtype=np.float64).reshape(3)


class AdaptiveVoxelMap:
    def __init__(
        self,
        voxel_size: float = 1.0,
        n1: int = 20,
        n2: int = 40,
        r_max: float = 100.0,
        taxonomy: ClassTaxonomy = DEFAULT_TAXONOMY,
        adaptive: bool = True,
    ):
        if voxel_size <= 0 or r_max <= 0 or not 0 < n1 <= n2:
            raise ValueError("invalid voxel map parameters")
        self.voxel_size = float(voxel_size)
        self.n1 = int(n1)
        self.n2 = int(n2)
        self.r_max = float(r_max)
        self.taxonomy = taxonomy
        self.adaptive = adaptive
        # a critical insert at exactly N2 may take one extra slot
        self.capacity = self.n2 + 1 if adaptive else self.n1
        self._size = 0
        self._keys = np.zeros(0, dtype=np.int64)
        self._points = np.zeros((0, self.capacity, 3))
        self._labels = np.zeros((0, self.capacity), dtype=np.int32)
        self._counts = np.zeros(0, dtype=np.int64)
        self._index: tuple[np.ndarray, np.ndarray] | None = None

    def __len__(self) -> int:
        return self._size

    @property
    def n_points(self) -> int:
        return int(self._counts[: self._size].sum())

    def empty(self) -> bool:
        return self._size == 0

    def _grow(self, needed: int) -> None:
        if needed <= len(self._keys):
            return
        new_cap = max(needed, 2 * len(self._keys), 64)
        keys = np.zeros(new_cap, dtype=np.int64)
        pts = np.zeros((new_cap, self.capacity, 3))
        labs = np.zeros((new_cap, self.capacity), dtype=np.int32)
        counts = np.zeros(new_cap, dtype=np.int64)
        n = self._size
        keys[:n], pts[:n], labs[:n], counts[:n] = (
            self._keys[:n], self._points[:n], self._labels[:n], self._counts[:n],
        )
        self._keys, self._points, self._labels, self._counts = keys, pts, labs, counts

    def index(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted voxel keys and the slot row each maps to."""
        if self._index is None:
            keys = self._keys[: self._size]
            order = np.argsort(keys, kind="stable")
            self._index = (keys[order], order.astype(np.int64))
        return self._index

    def kernel_args(self):
        sorted_keys, sorted_rows = self.index()
        return sorted_keys, sorted_rows, self._points, self._labels, self._counts

    def _rows_for(self, keys: np.ndarray) -> np.ndarray:
        sorted_keys, sorted_rows = self.index()
        rows = np.full(len(keys), -1, dtype=np.int64)
        if len(sorted_keys):
            pos = np.searchsorted(sorted_keys, keys)
            clipped = np.minimum(pos, len(sorted_keys) - 1)
            hit = sorted_keys[clipped] == keys
            rows[hit] = sorted_rows[clipped[hit]]
        missing = rows < 0
        if missing.any():
            new_keys, first = np.unique(keys[missing], return_index=True)
            # new voxels get rows in order of first appearance
            new_keys = new_keys[np.argsort(first, kind="stable")]
            start = self._size
            self._grow(start + len(new_keys))
            self._keys[start : start + len(new_keys)] = new_keys
            self._size += len(new_keys)
            self._index = None
            rows[missing] = self._rows_for(keys[missing])
        return rows

    def add_points(self, points, labels) -> None:
        """Insertion rules only, without the range pruning step."""
        pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        labs = np.ascontiguousarray(labels, dtype=np.int32).reshape(-1)
        if len(pts) != len(labs):
            raise ValueError("points and labels differ in length")
        if len(pts) == 0:
            return
        rows = self._rows_for(pack_keys(voxel_coords(pts, self.voxel_size)))
        roles = np.ascontiguousarray(self.taxonomy.role_table[labs.astype(np.int64) & 0xFFFF])
        kernels.insert_points(
            rows, roles, labs, pts, self._points, self._labels, self._counts,
            self.n1, self.n2, self.adaptive,
        )

    def insert_scan(self, points, labels, pose) -> None:
        self.add_points(points, labels)
        self.prune(pose)

    def voxel_centers(self) -> np.ndarray:
        return (unpack_keys(self._keys[: self._size]) + 0.5) * self.voxel_size

    def prune(self, pose) -> None:
        if self._size == 0:
            return
        dist = np.linalg.norm(self.voxel_centers() - _position(pose), axis=1)
        keep = np.nonzero(dist < self.r_max)[0]
        if len(keep) == self._size:
            return
        m = len(keep)
        self._keys[:m] = self._keys[keep]
        self._points[:m] = self._points[keep]
        self._labels[:m] = self._labels[keep]
        self._counts[:m] = self._counts[keep]
        self._counts[m : self._size] = 0
        self._size = m
        self._index = None

    def bucket(self, ijk) -> tuple[np.ndarray, np.ndarray]:
        key = pack_keys(np.asarray(ijk, dtype=np.int64).reshape(1, 3))
        sorted_keys, sorted_rows = self.index()
        pos = int(np.searchsorted(sorted_keys, key[0]))
        if pos >= len(sorted_keys) or sorted_keys[pos] != key[0]:
            return np.zeros((0, 3)), np.zeros(0, dtype=np.int32)
        r = sorted_rows[pos]
        c = self._counts[r]
        return self._points[r, :c].copy(), self._labels[r, :c].copy()

    def query_neighborhood(self, position) -> tuple[np.ndarray, np.ndarray]:
        """Contents of the 27 cells around ``position``, cell by cell in lexicographic offset order."""
        base = voxel_coords(np.asarray(position, dtype=np.float64).reshape(1, 3), self.voxel_size)[0]
        pts, labs = [], []
        for off in neighbor_offsets():
            p, lab = self.bucket(base + off)
            pts.append(p)
            labs.append(lab)
        return np.concatenate(pts), np.concatenate(labs)

    def voxels(self):
        """Yield ``(ijk, points, labels)`` per voxel in key order."""
        sorted_keys, sorted_rows = self.index()
        for key, r in zip(sorted_keys, sorted_rows):
            c = self._counts[r]
            yield unpack_keys(key), self._points[r, :c], self._labels[r, :c]

    def point_cloud(self) -> tuple[np.ndarray, np.ndarray]:
        n = self._size
        mask = np.arange(self.capacity)[None, :] < self._counts[:n, None]
        return self._points[:n][mask], self._labels[:n][mask]

    def dump(self, path: str | Path) -> None:
        """Write ``x y z class`` per stored point (debug aid)."""
        pts, labs = self.point_cloud()
        with open(path, "w", encoding="utf-8") as fh:
            for p, lab in zip(pts, labs):
                fh.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {int(lab)}\n")
