"""SemanticKITTI class codes, their downsampling groups and functional roles."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

N_CODES = 1 << 16
UNLABELED = 0


class ClassGroup(enum.IntEnum):
    ROAD = 0
    PLANT = 1
    OBJECT = 2
    VEHICLE = 3
    BUILDING = 4
    UNLABELED = 5


# map roles stored per code: what insert_scan does once a bucket holds N1 points
ROLE_UNLABELED = 0
ROLE_ORDINARY = 1
ROLE_CRITICAL = 2

# moving-* codes collapse onto their static counterparts
MOVING_REMAP = {
    252: 10,  # moving-car
    253: 31,  # moving-bicyclist
    254: 30,  # moving-person
    255: 32,  # moving-motorcyclist
    256: 16,  # moving-on-rails
    257: 13,  # moving-bus
    258: 18,  # moving-truck
    259: 20,  # moving-other-vehicle
}

DEFAULT_GROUPS = {
    ClassGroup.ROAD: (40, 44, 48, 49),  # road, parking, sidewalk, other-ground
    ClassGroup.PLANT: (70, 72),  # vegetation, terrain
    ClassGroup.OBJECT: (71, 60, 80, 81, 99),  # trunk, lane-marking, pole, traffic-sign, other-object
    ClassGroup.VEHICLE: (10, 11, 13, 15, 16, 18, 20),
    ClassGroup.BUILDING: (50, 51),  # building, fence
}

DEFAULT_DYNAMIC = (10, 13, 18, 20)  # car, bus, truck, other-vehicle
DEFAULT_ALWAYS_DYNAMIC = (30, 31, 32, 11, 15)  # person, bicyclist, motorcyclist, bicycle, motorcycle
DEFAULT_LANDMARK = (44, 48, 49)  # parking, sidewalk, other-ground
DEFAULT_CRITICAL = DEFAULT_GROUPS[ClassGroup.OBJECT]


def _lookup(codes: Sequence[int]) -> np.ndarray:
    table = np.zeros(N_CODES, dtype=bool)
    table[np.asarray(list(codes), dtype=np.int64)] = True
    table.setflags(write=False)
    return table


@dataclass(frozen=True)
class ClassTaxonomy:
    """Role partition of the 16-bit class space.

    Every lookup is a dense table indexed by class code, so membership tests on
    whole label arrays are a single fancy-index.
    """

    dynamic: tuple[int, ...] = DEFAULT_DYNAMIC
    always_dynamic: tuple[int, ...] = DEFAULT_ALWAYS_DYNAMIC
    landmark: tuple[int, ...] = DEFAULT_LANDMARK
    critical: tuple[int, ...] = DEFAULT_CRITICAL
    groups: Mapping[ClassGroup, tuple[int, ...]] = field(
        default_factory=lambda: dict(DEFAULT_GROUPS)
    )

    def __post_init__(self):
        for name in ("dynamic", "always_dynamic", "landmark", "critical"):
            codes = tuple(int(c) for c in getattr(self, name))
            if any(c < 0 or c >= N_CODES for c in codes):
                raise ValueError(f"taxonomy.{name}: class codes must fit in 16 bits")
            object.__setattr__(self, name, codes)
        if UNLABELED in self.critical:
            raise ValueError("taxonomy.critical: the unlabeled code cannot be critical")
        if set(self.landmark) & (set(self.dynamic) | set(self.always_dynamic)):
            raise ValueError("taxonomy.landmark: landmarks must be static classes")

        group_table = np.full(N_CODES, ClassGroup.UNLABELED, dtype=np.int8)
        seen: set[int] = set()
        for group, codes in self.groups.items():
            group = ClassGroup(group)
            for c in codes:
                if c in seen:
                    raise ValueError(f"taxonomy.groups: code {c} assigned twice")
                seen.add(c)
                group_table[c] = group
        for moving, base in MOVING_REMAP.items():
            if moving not in seen:
                group_table[moving] = group_table[base]
        group_table.setflags(write=False)

        movable = _lookup(self.dynamic) | _lookup(self.always_dynamic)
        static = ~movable
        static.setflags(write=False)
        roles = np.full(N_CODES, ROLE_ORDINARY, dtype=np.int8)
        roles[UNLABELED] = ROLE_UNLABELED
        roles[list(self.critical)] = ROLE_CRITICAL
        roles.setflags(write=False)

        object.__setattr__(self, "group_table", group_table)
        object.__setattr__(self, "dynamic_table", _lookup(self.dynamic))
        object.__setattr__(self, "always_dynamic_table", _lookup(self.always_dynamic))
        object.__setattr__(self, "static_table", static)
        object.__setattr__(self, "landmark_table", _lookup(self.landmark))
        object.__setattr__(self, "role_table", roles)

    @classmethod
    def from_overrides(cls, overrides: Mapping | None) -> "ClassTaxonomy":
        if not overrides:
            return cls()
        kwargs = {}
        for key in ("dynamic", "always_dynamic", "landmark", "critical"):
            if key in overrides:
                kwargs[key] = tuple(overrides[key])
        if "groups" in overrides:
            groups = {}
            for name, codes in overrides["groups"].items():
                try:
                    groups[ClassGroup[str(name).upper()]] = tuple(codes)
                except KeyError:
                    raise ValueError(f"taxonomy.groups: unknown group {name!r}") from None
            kwargs["groups"] = groups
        return cls(**kwargs)

    def to_overrides(self) -> dict:
        return {
            "dynamic": list(self.dynamic),
            "always_dynamic": list(self.always_dynamic),
            "landmark": list(self.landmark),
            "critical": list(self.critical),
            "groups": {g.name.lower(): list(c) for g, c in sorted(self.groups.items())},
        }

    def classify(self, code: int) -> ClassGroup:
        return ClassGroup(int(self.group_table[int(code) & 0xFFFF]))

    def groups_of(self, labels: np.ndarray) -> np.ndarray:
        return self.group_table[np.asarray(labels, dtype=np.int64)]


DEFAULT_TAXONOMY = ClassTaxonomy()


def classify(code: int) -> ClassGroup:
    return DEFAULT_TAXONOMY.classify(code)


def remap_moving(labels: np.ndarray) -> np.ndarray:
    """Fold SemanticKITTI moving-* codes onto their static base classes."""
    table = np.arange(N_CODES, dtype=np.uint16)
    for moving, base in MOVING_REMAP.items():
        table[moving] = base
    return table[np.asarray(labels, dtype=np.int64)]


def strip_far_labels(points: np.ndarray, labels: np.ndarray, max_range: float = 50.0) -> np.ndarray:
    """Labels with every point beyond ``max_range`` of the sensor reset to unlabeled."""
    if max_range <= 0:
        raise ValueError("label strip range must be positive")
    labels = np.asarray(labels)
    out = labels.copy()
    if len(out):
        out[np.linalg.norm(np.asarray(points), axis=1) > max_range] = UNLABELED
    return out
