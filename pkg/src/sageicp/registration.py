"""Robust point-to-point ICP with Gauss-Newton updates on SE(3)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from sageicp import kernels
from sageicp.association import Correspondences, find_correspondences
from sageicp.geometry import Pose, exp_map
from sageicp.voxel_map import AdaptiveVoxelMap

FALLBACK_DAMPING = 1e-9


@dataclass(frozen=True)
class ICPParams:
    max_iterations: int = 500
    convergence_eps: float = 1e-4
    fixed_kernel: float | None = None

    def __post_init__(self):
        if self.max_iterations < 1 or not self.convergence_eps > 0:
            raise ValueError("max_iterations >= 1 and convergence_eps > 0 required")


@dataclass
class LinearSystem:
    H: np.ndarray
    g: np.ndarray
    cost: float


@dataclass
class RegistrationResult:
    pose: Pose
    iterations: int = 0
    correspondences: int = 0
    degenerate: bool = False
    costs: list[float] = field(default_factory=list)


def robust_weight(r2, kappa: float):
    """Geman-McClure IRLS weight ``(k^2 / (k^2 + r^2))^2``."""
    k2 = kappa * kappa
    return (k2 / (k2 + np.asarray(r2, dtype=np.float64))) ** 2


def build_linear_system(corr: Correspondences, pose: Pose, kappa: float) -> LinearSystem:
    src_world = np.ascontiguousarray(pose.apply(corr.source))
    H, g, cost = kernels.accumulate_system(src_world, np.ascontiguousarray(corr.target), float(kappa))
    return LinearSystem(H, g, float(cost))


def solve_step(system: LinearSystem) -> np.ndarray:
    H, g = system.H, system.g
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        damped = H + FALLBACK_DAMPING * np.eye(6)
        return np.linalg.lstsq(damped, -g, rcond=None)[0]
    y = np.linalg.solve(L, -g)
    return np.linalg.solve(L.T, y)


def register_scan(
    points: np.ndarray,
    labels: np.ndarray,
    voxel_map: AdaptiveVoxelMap,
    initial: Pose,
    tau: float,
    gamma0: float,
    params: ICPParams = ICPParams(),
) -> RegistrationResult:
    if voxel_map.empty() or len(points) == 0:
        return RegistrationResult(pose=initial)
    kappa = params.fixed_kernel if params.fixed_kernel is not None else tau / 3.0
    pose = initial
    result = RegistrationResult(pose=initial)
    for it in range(params.max_iterations):
        corr = find_correspondences(points, labels, voxel_map, pose, tau, gamma0)
        result.correspondences = len(corr)
        if len(corr) == 0:
            result.degenerate = True
            break
        system = build_linear_system(corr, pose, kappa)
        result.costs.append(system.cost)
        dx = solve_step(system)
        pose = exp_map(dx) @ pose
        result.iterations = it + 1
        if np.linalg.norm(dx) < params.convergence_eps:
            break
    result.pose = pose.orthonormalized()
    return result
