"""Synthetic labelled street scenes for tests, ablations and benchmarks.

Nothing here is ray-cast: every frame re-samples the surfaces near the sensor
uniformly by area, so consecutive scans never share exact points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from sageicp.geometry import Pose, so3_exp

ROAD, PARKING, SIDEWALK, TERRAIN = 40, 44, 48, 72
BUILDING, FENCE, OTHER_STRUCTURE = 50, 51, 52
VEGETATION, TRUNK, LANE_MARKING, POLE, SIGN = 70, 71, 60, 80, 81
CAR, PERSON = 10, 30


@dataclass
class Primitive:
    kind: str  # "quad", "box", "cylinder", "sphere"
    label: int
    center: np.ndarray
    params: tuple
    area: float
    extent: float

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if n <= 0:
            return np.zeros((0, 3))
        if self.kind == "quad":
            origin, u, v = self.params
            a, b = rng.random((2, n))
            return origin + a[:, None] * u + b[:, None] * v
        if self.kind == "cylinder":
            radius, height = self.params
            phi = rng.random(n) * 2 * math.pi
            z = rng.random(n) * height
            return self.center + np.stack([radius * np.cos(phi), radius * np.sin(phi), z], 1)
        if self.kind == "sphere":
            (radius,) = self.params
            v = rng.normal(size=(n, 3))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            return self.center + radius * v
        if self.kind == "box":
            lx, ly, lz, yaw = self.params
            faces = np.array([ly * lz, ly * lz, lx * lz, lx * lz, lx * ly])
            which = rng.choice(5, size=n, p=faces / faces.sum())
            a, b = rng.random((2, n)) - 0.5
            local = np.empty((n, 3))
            sx = np.where(which == 0, 0.5, -0.5)
            sy = np.where(which == 2, 0.5, -0.5)
            xf = which <= 1
            yf = (which == 2) | (which == 3)
            top = which == 4
            local[xf] = np.stack([sx[xf] * lx, a[xf] * ly, (b[xf] + 0.5) * lz], 1)
            local[yf] = np.stack([a[yf] * lx, sy[yf] * ly, (b[yf] + 0.5) * lz], 1)
            local[top] = np.stack([a[top] * lx, b[top] * ly, np.full(top.sum(), lz)], 1)
            c, s = math.cos(yaw), math.sin(yaw)
            R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
            return local @ R.T + self.center
        raise ValueError(self.kind)


def quad(label, origin, u, v) -> Primitive:
    origin, u, v = (np.asarray(x, dtype=np.float64) for x in (origin, u, v))
    area = float(np.linalg.norm(np.cross(u, v)))
    center = origin + 0.5 * (u + v)
    return Primitive("quad", label, center, (origin, u, v), area, 0.5 * float(np.linalg.norm(u + v)))


def box(label, center, lx, ly, lz, yaw=0.0) -> Primitive:
    area = 2 * (lx + ly) * lz + lx * ly
    return Primitive("box", label, np.asarray(center, float), (lx, ly, lz, yaw), area,
                     0.5 * math.sqrt(lx * lx + ly * ly + lz * lz))


def cylinder(label, base, radius, height) -> Primitive:
    return Primitive("cylinder", label, np.asarray(base, float), (radius, height),
                     2 * math.pi * radius * height, max(radius, height))


def sphere(label, center, radius) -> Primitive:
    return Primitive("sphere", label, np.asarray(center, float), (radius,),
                     4 * math.pi * radius * radius, radius)


def street_world(x_min: float, x_max: float, rng: np.random.Generator,
                 parked_every: float = 7.0) -> list[Primitive]:
    prims: list[Primitive] = []
    tile = 10.0
    for x0 in np.arange(x_min, x_max, tile):
        prims.append(quad(ROAD, (x0, -4.0, 0.0), (tile, 0, 0), (0, 8.0, 0)))
        prims.append(quad(PARKING, (x0, 4.0, 0.0), (tile, 0, 0), (0, 5.0, 0)))
        prims.append(quad(SIDEWALK, (x0, -7.0, 0.0), (tile, 0, 0), (0, 3.0, 0)))
        prims.append(quad(SIDEWALK, (x0, 9.0, 0.0), (tile, 0, 0), (0, 3.0, 0)))
        prims.append(quad(TERRAIN, (x0, -10.0, 0.0), (tile, 0, 0), (0, 3.0, 0)))
    # building blocks with gaps give faces across the driving direction
    x = x_min
    while x < x_max:
        length = rng.uniform(10.0, 16.0)
        prims.append(box(BUILDING, (x + length / 2, 17.0, 0.0), length, 10.0, rng.uniform(6, 14)))
        x += length + rng.uniform(3.0, 6.0)
    x = x_min
    while x < x_max:
        length = rng.uniform(8.0, 14.0)
        prims.append(box(BUILDING, (x + length / 2, -15.0, 0.0), length, 10.0, rng.uniform(6, 12)))
        x += length + rng.uniform(3.0, 6.0)
    for xp in np.arange(x_min + 3.0, x_max, 9.0):
        prims.append(cylinder(POLE, (xp, -5.0, 0.0), 0.12, 6.0))
        prims.append(cylinder(POLE, (xp + 4.5, 10.0, 0.0), 0.12, 6.0))
        prims.append(quad(SIGN, (xp + 0.15, -5.4, 2.2), (0, 0.8, 0), (0, 0, 0.8)))
        prims.append(quad(LANE_MARKING, (xp, -0.1, 0.01), (3.0, 0, 0), (0, 0.2, 0)))
    for xt in np.arange(x_min + 6.0, x_max, 12.0):
        prims.append(cylinder(TRUNK, (xt, -8.5, 0.0), 0.25, 3.0))
        prims.append(sphere(VEGETATION, (xt, -8.5, 4.0), 1.6))
        prims.append(quad(FENCE, (xt - 3.0, -9.9, 0.0), (5.0, 0, 0), (0, 0, 1.2)))
    for xo in np.arange(x_min + 10.0, x_max, 25.0):
        prims.append(box(OTHER_STRUCTURE, (xo, -6.0, 0.0), 1.0, 1.0, 1.0))
    for xc in np.arange(x_min + 2.0, x_max, parked_every):
        if rng.random() < 0.8:
            prims.append(box(CAR, (xc, 6.5, 0.0), 4.4, 1.8, 1.5))
    return prims


@dataclass
class Mover:
    label: int
    start: np.ndarray
    velocity: np.ndarray  # meters per frame
    size: tuple

    def at(self, k: int) -> Primitive:
        c = self.start + k * self.velocity
        if self.label == PERSON:
            return cylinder(PERSON, c, self.size[0], self.size[1])
        return box(self.label, c, *self.size)


@dataclass
class SyntheticSequence:
    frames: list[tuple[np.ndarray, np.ndarray]]
    gt_poses: np.ndarray  # sensor-to-world, one per frame
    world: list[Primitive] = field(default_factory=list)

    def relative_gt(self) -> np.ndarray:
        T0inv = np.linalg.inv(self.gt_poses[0])
        return np.einsum("ij,njk->nik", T0inv, self.gt_poses)


def sensor_pose(k: int, speed: float, sway: float = 0.8, height: float = 1.73) -> np.ndarray:
    x = k * speed
    y = sway * math.sin(0.15 * k)
    dy = sway * 0.15 * math.cos(0.15 * k) / max(speed, 1e-9)
    yaw = math.atan(dy)
    T = np.eye(4)
    T[:3, :3] = so3_exp([0.0, 0.0, yaw])
    T[:3, 3] = (x, y, height)
    return T


def sample_scan(prims: list[Primitive], T: np.ndarray, n_points: int, rng: np.random.Generator,
                max_range: float = 80.0, min_range: float = 2.0, noise: float = 0.01,
                vehicle_density: float = 8.0):
    center = T[:3, 3]
    near = [p for p in prims if np.linalg.norm(p.center - center) - p.extent < max_range]
    areas = np.array([p.area for p in near])
    rho = n_points / areas.sum()
    pts, labs = [], []
    for p in near:
        # cars stay dense enough to cluster, like the close returns of a real sensor
        density = max(rho, vehicle_density) if p.label == CAR else rho
        s = p.sample(rng, int(rng.poisson(density * p.area)))
        pts.append(s)
        labs.append(np.full(len(s), p.label, dtype=np.uint16))
    world = np.concatenate(pts)
    labels = np.concatenate(labs)
    local = (world - center) @ T[:3, :3]
    local += rng.normal(scale=noise, size=local.shape)
    r = np.linalg.norm(local, axis=1)
    keep = (r < max_range) & (r > min_range)
    return local[keep], labels[keep]


def street_sequence(
    n_frames: int = 20,
    n_points: int = 20000,
    speed: float = 1.0,
    seed: int = 0,
    moving_cars: int = 3,
    pedestrians: int = 4,
    unlabeled_fraction: float = 0.1,
    label_noise: float = 0.0,
    max_range: float = 80.0,
) -> SyntheticSequence:
    """A drive down a street with parked and moving cars, pedestrians and label gaps."""
    rng = np.random.default_rng(seed)
    x_max = n_frames * speed + max_range + 10.0
    world = street_world(-max_range - 10.0, x_max, rng)
    movers = []
    for i in range(moving_cars):
        lane = -2.0 if i % 2 == 0 else 2.0
        v = np.array([speed * (1.6 if lane < 0 else -1.2), 0.0, 0.0])
        movers.append(Mover(CAR, np.array([rng.uniform(-20.0, 30.0), lane, 0.0]), v, (4.4, 1.8, 1.5)))
    for _ in range(pedestrians):
        movers.append(Mover(PERSON, np.array([rng.uniform(-10.0, 30.0), -5.5, 0.0]),
                            np.array([0.1, 0.0, 0.0]), (0.3, 1.7)))
    frames, poses = [], []
    noise_classes = np.array([ROAD, BUILDING, VEGETATION, POLE, CAR, TERRAIN], dtype=np.uint16)
    for k in range(n_frames):
        T = sensor_pose(k, speed)
        prims = world + [m.at(k) for m in movers]
        pts, labs = sample_scan(prims, T, n_points, rng, max_range=max_range)
        if unlabeled_fraction:
            # gaps hit the background, vehicles keep their labels
            labs[(rng.random(len(labs)) < unlabeled_fraction) & (labs != CAR)] = 0
        if label_noise:
            flip = rng.random(len(labs)) < label_noise
            labs[flip] = rng.choice(noise_classes, size=int(flip.sum()))
        frames.append((pts, labs))
        poses.append(T)
    return SyntheticSequence(frames, np.stack(poses), world)


def structured_scene(seed: int = 0, n_points: int = 12000, half_size: float = 12.0):
    """Ground, three orthogonal walls and a few poles, labelled, in a local frame."""
    rng = np.random.default_rng(seed)
    s = half_size
    prims = [
        quad(ROAD, (-s, -s, 0.0), (2 * s, 0, 0), (0, 2 * s, 0)),
        quad(BUILDING, (s, -s, 0.0), (0, 2 * s, 0), (0, 0, 6.0)),
        quad(BUILDING, (-s, s, 0.0), (2 * s, 0, 0), (0, 0, 6.0)),
        quad(FENCE, (-s, -s, 0.0), (0, 2 * s, 0), (0, 0, 2.0)),
    ]
    for x, y in ((3.0, 4.0), (-5.0, -2.0), (6.0, -7.0), (-8.0, 6.0)):
        prims.append(cylinder(POLE, (x, y, 0.0), 0.15, 5.0))
        prims.append(quad(SIGN, (x + 0.2, y - 0.4, 2.5), (0, 0.8, 0), (0, 0, 0.8)))
    areas = np.array([p.area for p in prims])
    # small structures get a floor on their share so they matter to the fit
    counts = np.maximum((n_points * areas / areas.sum()).astype(int), 150)
    pts = np.concatenate([p.sample(rng, int(c)) for p, c in zip(prims, counts)])
    labs = np.concatenate([np.full(int(c), p.label, dtype=np.uint16) for p, c in zip(prims, counts)])
    return pts, labs


def random_pose(rng: np.random.Generator, max_translation: float, max_angle_deg: float) -> Pose:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = math.radians(max_angle_deg) * rng.random()
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    t = direction * max_translation * rng.random()
    return Pose(so3_exp(axis * angle), t)
