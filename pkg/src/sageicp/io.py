"""KITTI Velodyne scans, SemanticKITTI labels, and trajectory text files."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from sageicp.geometry import Pose
from sageicp.taxonomy import remap_moving

log = logging.getLogger(__name__)

SCAN_RECORD = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("intensity", "<f4")])
LABEL_RECORD = np.dtype("<u4")
KITTI_FRAME_PERIOD = 0.1


class MalformedScanError(ValueError):
    pass


class MalformedLabelError(ValueError):
    pass


class FrameMismatchError(ValueError):
    pass


class MissingFrameError(FileNotFoundError):
    pass


class TrajectoryParseError(ValueError):
    def __init__(self, source: str, line: int, message: str):
        super().__init__(f"{source}:{line}: {message}")
        self.line = line


@dataclass
class ScanRecord:
    points: np.ndarray
    intensities: np.ndarray
    frame_index: int = 0
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class LabelRecord:
    class_codes: np.ndarray
    instance_ids: np.ndarray
    frame_index: int = 0

    def __len__(self) -> int:
        return len(self.class_codes)


def read_scan(data: bytes, frame_index: int = 0, source: str = "<bytes>") -> ScanRecord:
    if len(data) % SCAN_RECORD.itemsize:
        raise MalformedScanError(
            f"{source}: {len(data)} bytes is not a multiple of {SCAN_RECORD.itemsize}"
        )
    rec = np.frombuffer(data, dtype=SCAN_RECORD)
    pts = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
    inten = rec["intensity"].astype(np.float64)
    finite = np.all(np.isfinite(pts), axis=1)
    dropped = int(len(pts) - np.count_nonzero(finite))
    if dropped:
        log.warning("%s: dropped %d non-finite points", source, dropped)
        pts, inten = pts[finite], inten[finite]
    return ScanRecord(pts, inten, frame_index, dropped)


def encode_scan(points: np.ndarray, intensities: np.ndarray | None = None) -> bytes:
    pts = np.asarray(points).reshape(-1, 3)
    rec = np.zeros(len(pts), dtype=SCAN_RECORD)
    rec["x"], rec["y"], rec["z"] = pts[:, 0], pts[:, 1], pts[:, 2]
    if intensities is not None:
        rec["intensity"] = intensities
    return rec.tobytes()


def read_labels(data: bytes, frame_index: int = 0, source: str = "<bytes>") -> LabelRecord:
    if len(data) % LABEL_RECORD.itemsize:
        raise MalformedLabelError(
            f"{source}: {len(data)} bytes is not a multiple of {LABEL_RECORD.itemsize}"
        )
    words = np.frombuffer(data, dtype=LABEL_RECORD)
    return LabelRecord(
        (words & 0xFFFF).astype(np.uint16), (words >> 16).astype(np.uint16), frame_index
    )


def encode_labels(class_codes: np.ndarray, instance_ids: np.ndarray | None = None) -> bytes:
    codes = np.asarray(class_codes, dtype=np.uint32)
    inst = np.zeros_like(codes) if instance_ids is None else np.asarray(instance_ids, dtype=np.uint32)
    return ((inst << 16) | (codes & 0xFFFF)).astype(LABEL_RECORD).tobytes()


def _fmt(x: float) -> str:
    # +0.0 folds negative zero
    return f"{float(x) + 0.0:.12g}"


def _as_matrices(poses) -> np.ndarray:
    if isinstance(poses, np.ndarray):
        return poses.reshape(-1, 4, 4)
    mats = [p.matrix if isinstance(p, Pose) else np.asarray(p) for p in poses]
    return np.stack(mats) if mats else np.zeros((0, 4, 4))


def write_trajectory(poses, fmt: str = "kitti", timestamps: Sequence[float] | None = None) -> str:
    mats = _as_matrices(poses)
    lines = []
    if fmt == "kitti":
        for m in mats:
            lines.append(" ".join(_fmt(v) for v in m[:3, :4].reshape(-1)))
    elif fmt == "tum":
        if timestamps is None:
            timestamps = np.arange(len(mats)) * KITTI_FRAME_PERIOD
        for ts, m in zip(timestamps, mats):
            q = Rotation.from_matrix(m[:3, :3]).as_quat()  # x, y, z, w
            vals = [ts, *m[:3, 3], *q]
            lines.append(" ".join(_fmt(v) for v in vals))
    else:
        raise ValueError(f"unknown trajectory format {fmt!r}")
    return "".join(line + "\n" for line in lines)


def parse_trajectory(text: str, fmt: str = "kitti", source: str = "<text>") -> np.ndarray:
    """Poses as an ``(N, 4, 4)`` array; rotations are taken as written."""
    expected = {"kitti": 12, "tum": 8}.get(fmt)
    if expected is None:
        raise ValueError(f"unknown trajectory format {fmt!r}")
    mats = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != expected:
            raise TrajectoryParseError(source, lineno, f"expected {expected} numbers, got {len(parts)}")
        try:
            vals = np.array([float(v) for v in parts])
        except ValueError as exc:
            raise TrajectoryParseError(source, lineno, str(exc)) from None
        if not np.all(np.isfinite(vals)):
            raise TrajectoryParseError(source, lineno, "non-finite value")
        m = np.eye(4)
        if fmt == "kitti":
            m[:3, :4] = vals.reshape(3, 4)
        else:
            m[:3, :3] = Rotation.from_quat(vals[4:8]).as_matrix()
            m[:3, 3] = vals[1:4]
        mats.append(m)
    return np.stack(mats) if mats else np.zeros((0, 4, 4))


def read_trajectory(path: str | Path, fmt: str = "kitti") -> np.ndarray:
    path = Path(path)
    return parse_trajectory(path.read_text(encoding="utf-8"), fmt, source=str(path))


def read_velo_to_cam(path: str | Path) -> np.ndarray:
    """The ``Tr`` entry of a KITTI ``calib.txt`` as a 4x4 matrix."""
    path = Path(path)
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        key, _, rest = line.partition(":")
        if key.strip() != "Tr":
            continue
        parts = rest.split()
        if len(parts) != 12:
            raise TrajectoryParseError(str(path), lineno, f"expected 12 numbers, got {len(parts)}")
        m = np.eye(4)
        m[:3, :4] = np.array([float(v) for v in parts]).reshape(3, 4)
        return m
    raise TrajectoryParseError(str(path), 0, "no Tr entry")


def camera_to_lidar(poses: np.ndarray, velo_to_cam: np.ndarray) -> np.ndarray:
    """Re-express camera-frame ground truth in the LiDAR frame: Tr^-1 P Tr."""
    Tr = np.asarray(velo_to_cam)
    return np.einsum("ij,njk,kl->nil", np.linalg.inv(Tr), np.asarray(poses).reshape(-1, 4, 4), Tr)


_FRAME_RE = re.compile(r"^(\d+)$")


def _frame_numbers(directory: Path, suffix: str) -> list[int]:
    nums = []
    for p in directory.glob(f"*{suffix}"):
        m = _FRAME_RE.match(p.stem)
        if m:
            nums.append(int(m.group(1)))
    return sorted(nums)


class KittiSequence:
    """One sequence laid out as ``<seq>/velodyne/NNNNNN.bin`` (+ ``labels/NNNNNN.label``)."""

    def __init__(
        self,
        dataset: str | Path,
        sequence: str | None = None,
        labels: str | Path | None = None,
        require_labels: bool = True,
    ):
        root = Path(dataset)
        seq_dir = root
        if sequence is not None:
            for cand in (root / "sequences" / sequence, root / sequence):
                if cand.is_dir():
                    seq_dir = cand
                    break
            else:
                raise MissingFrameError(f"sequence directory not found: {root / 'sequences' / sequence}")
        self.sequence_dir = seq_dir
        self.scan_dir = seq_dir / "velodyne"
        if not self.scan_dir.is_dir():
            raise MissingFrameError(f"scan directory not found: {self.scan_dir}")
        self.label_dir = self._resolve_labels(labels, sequence)
        if require_labels and self.label_dir is None:
            missing = Path(labels) if labels is not None else seq_dir / "labels"
            raise MissingFrameError(f"label directory not found: {missing}")
        nums = _frame_numbers(self.scan_dir, ".bin")
        if not nums:
            raise MissingFrameError(f"no scans in {self.scan_dir}")
        width = len(next(self.scan_dir.glob("*.bin")).stem)
        self._width = width
        self.first = nums[0]
        for expect, got in zip(range(nums[0], nums[0] + len(nums)), nums):
            if expect != got:
                raise MissingFrameError(f"missing scan: {self.scan_path(expect)}")
        self.frames = nums
        if self.label_dir is not None:
            for n in nums:
                if not self.label_path(n).is_file():
                    raise MissingFrameError(f"missing labels: {self.label_path(n)}")

    def _resolve_labels(self, labels, sequence) -> Path | None:
        if labels is None:
            cands = [self.sequence_dir / "labels"]
        else:
            base = Path(labels)
            cands = [base]
            if sequence is not None:
                cands = [base / "sequences" / sequence / "labels", base / sequence / "labels", base]
        for c in cands:
            if c.is_dir():
                return c
        return None

    def __len__(self) -> int:
        return len(self.frames)

    def scan_path(self, n: int) -> Path:
        return self.scan_dir / f"{n:0{self._width}d}.bin"

    def label_path(self, n: int) -> Path:
        return self.label_dir / f"{n:0{self._width}d}.label"

    def load(self, i: int) -> tuple[np.ndarray, np.ndarray, ScanRecord]:
        """Points and moving-folded class codes of the ``i``-th frame."""
        n = self.frames[i]
        sp = self.scan_path(n)
        scan_bytes = sp.read_bytes()
        if len(scan_bytes) % SCAN_RECORD.itemsize:
            raise MalformedScanError(f"{sp}: {len(scan_bytes)} bytes is not a multiple of 16")
        raw = np.frombuffer(scan_bytes, dtype=SCAN_RECORD)
        scan = read_scan(scan_bytes, i, str(sp))
        if self.label_dir is None:
            return scan.points, np.zeros(len(scan), dtype=np.uint16), scan
        lp = self.label_path(n)
        lab = read_labels(lp.read_bytes(), i, str(lp))
        if len(lab) != len(raw):
            raise FrameMismatchError(
                f"frame {n}: {len(raw)} points in {sp.name} but {len(lab)} labels in {lp.name}"
            )
        codes = lab.class_codes
        if scan.dropped:
            finite = np.all(np.isfinite(np.stack([raw["x"], raw["y"], raw["z"]], 1)), axis=1)
            codes = codes[finite]
        return scan.points, remap_moving(codes), scan

    def __iter__(self) -> Iterable[tuple[np.ndarray, np.ndarray, ScanRecord]]:
        for i in range(len(self)):
            yield self.load(i)


def write_sequence(directory: str | Path, frames, labels: bool = True) -> Path:
    """Write ``(points, labels)`` frames in the KITTI layout; returns the sequence dir."""
    d = Path(directory)
    (d / "velodyne").mkdir(parents=True, exist_ok=True)
    if labels:
        (d / "labels").mkdir(parents=True, exist_ok=True)
    for i, (pts, labs) in enumerate(frames):
        (d / "velodyne" / f"{i:06d}.bin").write_bytes(encode_scan(pts))
        if labels:
            (d / "labels" / f"{i:06d}.label").write_bytes(encode_labels(labs))
    return d
