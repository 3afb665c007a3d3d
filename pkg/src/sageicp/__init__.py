"""Semantic-assisted point-to-point ICP odometry for labelled LiDAR scans."""
from sageicp.config import Ablation, RunConfig, load_config
from sageicp.geometry import Pose, exp_map, log_map
from sageicp.pipeline import Odometry, run_batch
from sageicp.taxonomy import DEFAULT_TAXONOMY, ClassTaxonomy
from sageicp.voxel_map import AdaptiveVoxelMap

__all__ = [
    "Ablation", "AdaptiveVoxelMap", "ClassTaxonomy", "DEFAULT_TAXONOMY", "Odometry",
    "Pose", "RunConfig", "exp_map", "load_config", "log_map", "run_batch",
]
__version__ = "0.1.0"
