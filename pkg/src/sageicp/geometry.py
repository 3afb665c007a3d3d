"""Rigid-body math on SE(3) plus the two scan corrections that act per point.

Twists are 6-vectors ordered ``(rx, ry, rz, tx, ty, tz)``: rotational part
first, radians then meters.
"""
from __future__ import annotations

import math
from typing import Iterable

import numpy as np

ORTHONORMAL_TOL = 1e-9
# log_map refuses rotations this close to pi
LOG_PI_MARGIN = 1e-6


class DegenerateRotationError(ValueError):
    pass


class Pose:
    """Rigid transform ``x -> R @ x + t``."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation=None, translation=None, validate: bool = True):
        R = np.eye(3) if rotation is None else np.array(rotation, dtype=np.float64)
        t = np.zeros(3) if translation is None else np.array(translation, dtype=np.float64)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ValueError(f"bad pose shapes {R.shape}, {t.shape}")
        if validate:
            if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
                raise ValueError("pose contains non-finite entries")
            if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHONORMAL_TOL:
                raise ValueError("rotation is not orthonormal")
            if abs(np.linalg.det(R) - 1.0) > ORTHONORMAL_TOL:
                raise ValueError("rotation determinant is not +1")
        R.setflags(write=False)
        t.setflags(write=False)
        self.rotation = R
        self.translation = t

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, matrix, orthonormalize: bool = False) -> "Pose":
        m = np.asarray(matrix, dtype=np.float64)
        R = m[:3, :3]
        if orthonormalize:
            R = project_to_so3(R)
        return cls(R, m[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation, validate=False)

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def orthonormalized(self) -> "Pose":
        return Pose(project_to_so3(self.rotation), self.translation)

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    def __repr__(self) -> str:
        return f"Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def compose(a: Pose, b: Pose) -> Pose:
    """``a`` applied after ``b``."""
    return Pose(
        a.rotation @ b.rotation,
        a.rotation @ b.translation + a.translation,
        validate=False,
    )


def project_to_so3(R: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] *= -1
        Q = U @ Vt
    return Q


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _vee(W: np.ndarray) -> np.ndarray:
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def so3_exp(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    theta = math.sqrt(float(w @ w))
    W = skew(w)
    if theta < 1e-8:
        return np.eye(3) + W + 0.5 * (W @ W)
    A = math.sin(theta) / theta
    B = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + A * W + B * (W @ W)


def rotation_angle(R: np.ndarray) -> float:
    """Angle of a rotation matrix via the trace, acos argument clamped."""
    c = 0.5 * (float(np.trace(R)) - 1.0)
    return math.acos(min(1.0, max(-1.0, c)))


def so3_log(R: np.ndarray) -> np.ndarray:
    s_vec = 0.5 * _vee(R - R.T)
    s = float(np.linalg.norm(s_vec))
    c = 0.5 * (float(np.trace(R)) - 1.0)
    theta = math.atan2(s, c)
    if theta > math.pi - LOG_PI_MARGIN:
        raise DegenerateRotationError(f"rotation angle {theta!r} too close to pi")
    if theta < 1e-8:
        return s_vec * (1.0 + theta * theta / 6.0)
    if theta < 2.5:
        return s_vec * (theta / s)
    # near pi the antisymmetric part is tiny; take the axis from the symmetric part
    B = 0.5 * (R + R.T) - c * np.eye(3)
    k = int(np.argmax(np.diag(B)))
    axis = B[:, k] / math.sqrt(B[k, k])
    axis /= np.linalg.norm(axis)
    if axis @ s_vec < 0:
        axis = -axis
    return axis * theta


def _left_jacobian(w: np.ndarray) -> np.ndarray:
    theta = math.sqrt(float(w @ w))
    W = skew(w)
    if theta < 1e-5:
        return np.eye(3) + 0.5 * W + (W @ W) / 6.0
    t2 = theta * theta
    return (
        np.eye(3)
        + (1.0 - math.cos(theta)) / t2 * W
        + (theta - math.sin(theta)) / (t2 * theta) * (W @ W)
    )


def _left_jacobian_inv(w: np.ndarray) -> np.ndarray:
    theta = math.sqrt(float(w @ w))
    W = skew(w)
    if theta < 1e-5:
        return np.eye(3) - 0.5 * W + (W @ W) / 12.0
    half = 0.5 * theta
    coef = (1.0 - half / math.tan(half)) / (theta * theta)
    return np.eye(3) - 0.5 * W + coef * (W @ W)


def exp_map(twist) -> Pose:
    xi = np.asarray(twist, dtype=np.float64)
    if xi.shape != (6,) or not np.all(np.isfinite(xi)):
        raise ValueError("twist must be six finite numbers")
    w, v = xi[:3], xi[3:]
    return Pose(so3_exp(w), _left_jacobian(w) @ v, validate=False)


def log_map(pose: Pose) -> np.ndarray:
    w = so3_log(pose.rotation)
    return np.concatenate([w, _left_jacobian_inv(w) @ pose.translation])


def correct_vertical_angle(points, angle_deg: float = 0.205) -> np.ndarray:
    """Raise every point's elevation by ``angle_deg``, keeping range and azimuth."""
    if not math.isfinite(angle_deg):
        raise ValueError("angle must be finite")
    pts = np.asarray(points, dtype=np.float64)
    out = pts.copy()
    if angle_deg == 0.0 or len(pts) == 0:
        return out
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    horiz = np.hypot(x, y)
    rng = np.sqrt(horiz * horiz + z * z)
    moving = rng > 0.0
    az = np.arctan2(y, x)
    el = np.arctan2(z, horiz) + math.radians(angle_deg)
    ch = rng * np.cos(el)
    out[moving, 0] = (ch * np.cos(az))[moving]
    out[moving, 1] = (ch * np.sin(az))[moving]
    out[moving, 2] = (rng * np.sin(el))[moving]
    return out


def azimuth_phase(points) -> np.ndarray:
    """Acquisition phase in [0, 1] for one clockwise sweep starting behind the sensor."""
    pts = np.asarray(points, dtype=np.float64)
    az = np.arctan2(pts[:, 1], pts[:, 0])
    return np.clip((math.pi - az) / (2.0 * math.pi), 0.0, 1.0)


def _batch_exp_parts(W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    theta = np.linalg.norm(W, axis=1)
    K = np.zeros((len(W), 3, 3))
    K[:, 0, 1], K[:, 0, 2] = -W[:, 2], W[:, 1]
    K[:, 1, 0], K[:, 1, 2] = W[:, 2], -W[:, 0]
    K[:, 2, 0], K[:, 2, 1] = -W[:, 1], W[:, 0]
    K2 = K @ K
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    A = np.where(small, 1.0, np.sin(safe) / safe)
    B = np.where(small, 0.5, (1.0 - np.cos(safe)) / (safe * safe))
    C = np.where(small, 1.0 / 6.0, (safe - np.sin(safe)) / (safe**3))
    eye = np.eye(3)[None]
    R = eye + A[:, None, None] * K + B[:, None, None] * K2
    V = eye + B[:, None, None] * K + C[:, None, None] * K2
    return R, V


def deskew(points, phases, frame_motion: Pose) -> np.ndarray:
    """Move each point by the fraction ``phase`` of ``frame_motion`` along the geodesic."""
    pts = np.asarray(points, dtype=np.float64)
    s = np.asarray(phases, dtype=np.float64)
    if len(s) != len(pts):
        raise ValueError("one phase per point required")
    xi = log_map(frame_motion)
    if not np.any(xi) or len(pts) == 0:
        return pts.copy()
    scaled = s[:, None] * xi[None, :]
    R, V = _batch_exp_parts(scaled[:, :3])
    t = np.einsum("nij,nj->ni", V, scaled[:, 3:])
    return np.einsum("nij,nj->ni", R, pts) + t


def poses_to_array(poses: Iterable[Pose]) -> np.ndarray:
    mats = [p.matrix for p in poses]
    return np.stack(mats) if mats else np.zeros((0, 4, 4))
