"""Run configuration: a flat YAML mapping whose absent keys fall back to the
KITTI Odometry parameter set.

Example::

    s_building: 0.5
    gamma0: 0.8
    ablation: {rdi: true, ss: true, saa: false, avm: true}
    taxonomy:
      landmark: [44, 48, 49]
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from sageicp.taxonomy import ClassGroup, ClassTaxonomy

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class Ablation:
    rdi: bool = True
    ss: bool = True
    saa: bool = True
    avm: bool = True

    def disabled(self, *names: str) -> "Ablation":
        bad = [n for n in names if n not in ("rdi", "ss", "saa", "avm")]
        if bad:
            raise ConfigError("ablation", f"unknown switch {bad[0]!r}")
        return dataclasses.replace(self, **{n: False for n in names})

    @property
    def all_off(self) -> bool:
        return not (self.rdi or self.ss or self.saa or self.avm)


@dataclass(frozen=True)
class RunConfig:
    # per-group semantic subsampling voxel sizes
    s_road: float = 0.6
    s_plant: float = 0.9
    s_object: float = 0.8
    s_vehicle: float = 0.6
    s_building: float = 1.0
    s_unlabel: float = 1.0
    gamma0: float = 0.4
    theta0: float = 0.5
    n1: int = 20
    n2: int = 40
    r_max: float = 100.0
    tau0: float = 2.0
    delta_min: float = 0.1

    d_r: float = 1.5
    label_strip_range: float = 50.0
    cluster_tolerance: float = 0.5
    cluster_min_size: int = 10
    map_voxel_size: float = 1.0
    uniform_voxel_size: float = 1.0

    max_iterations: int = 500
    convergence_eps: float = 1e-4
    # pins the robust kernel scale instead of tying it to tau / 3
    fixed_kernel: float | None = None

    deskew: bool = False
    vertical_correction_deg: float = 0.205
    ablation: Ablation = field(default_factory=Ablation)
    taxonomy: ClassTaxonomy = field(default_factory=ClassTaxonomy)

    def __post_init__(self):
        positive = (
            "s_road", "s_plant", "s_object", "s_vehicle", "s_building", "s_unlabel",
            "r_max", "tau0", "delta_min", "d_r", "label_strip_range",
            "cluster_tolerance", "map_voxel_size", "uniform_voxel_size", "convergence_eps",
        )
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(name, f"must be a positive number, got {v!r}")
        if not 0.0 < self.gamma0 < 1.0:
            raise ConfigError("gamma0", f"must lie in (0, 1), got {self.gamma0!r}")
        if not 0.0 <= self.theta0 <= 1.0:
            raise ConfigError("theta0", f"must lie in [0, 1], got {self.theta0!r}")
        for name in ("n1", "n2", "cluster_min_size", "max_iterations"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(name, f"must be a positive integer, got {v!r}")
        if self.n1 > self.n2:
            raise ConfigError("n1", f"must not exceed n2 ({self.n1} > {self.n2})")
        if self.fixed_kernel is not None and not self.fixed_kernel > 0:
            raise ConfigError("fixed_kernel", "must be positive when set")
        if not math.isfinite(self.vertical_correction_deg):
            raise ConfigError("vertical_correction_deg", "must be finite")
        if self.tau0 > 3.0 * self.map_voxel_size:
            log.warning(
                "tau0=%.3g exceeds 3 * map_voxel_size; correspondences beyond the "
                "27-cell neighbourhood are never found", self.tau0,
            )

    def group_sizes(self) -> dict[ClassGroup, float]:
        return {
            ClassGroup.ROAD: self.s_road,
            ClassGroup.PLANT: self.s_plant,
            ClassGroup.OBJECT: self.s_object,
            ClassGroup.VEHICLE: self.s_vehicle,
            ClassGroup.BUILDING: self.s_building,
            ClassGroup.UNLABELED: self.s_unlabel,
        }

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "ablation":
                v = dataclasses.asdict(v)
            elif f.name == "taxonomy":
                v = v.to_overrides()
            out[f.name] = v
        return out


_SCALAR_FIELDS = {f.name for f in fields(RunConfig)} - {"ablation", "taxonomy"}


def config_from_dict(data: dict[str, Any] | None) -> RunConfig:
    data = dict(data or {})
    unknown = set(data) - _SCALAR_FIELDS - {"ablation", "taxonomy"}
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(name, "unknown configuration key")
    kwargs: dict[str, Any] = {}
    for name in _SCALAR_FIELDS & set(data):
        kwargs[name] = data[name]
    if "ablation" in data:
        ab = data["ablation"] or {}
        bad = set(ab) - {"rdi", "ss", "saa", "avm"}
        if bad:
            raise ConfigError("ablation", f"unknown switch {sorted(bad)[0]!r}")
        kwargs["ablation"] = Ablation(**{k: bool(v) for k, v in ab.items()})
    if "taxonomy" in data:
        try:
            kwargs["taxonomy"] = ClassTaxonomy.from_overrides(data["taxonomy"])
        except ValueError as exc:
            raise ConfigError("taxonomy", str(exc)) from None
    # YAML reads "1e-4" as a string
    for name, value in list(kwargs.items()):
        if isinstance(value, str):
            try:
                kwargs[name] = float(value)
            except ValueError:
                raise ConfigError(name, f"not a number: {value!r}") from None
    return RunConfig(**kwargs)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"cannot parse {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError("<file>", "top level must be a mapping")
    return config_from_dict(data)


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=True)
