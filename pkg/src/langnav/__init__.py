"""Language-guided navigation planning on posed RGB-LiDAR scenes."""

__version__ = "0.1.0"

from .bev_map import CellState, CostLevels, GridSpec, OccupancyGrid, SemanticGrid, ValueMap
from .config import MapConfig, OrchestratorConfig, PlannerConfig, RunConfig
from .metrics import EvalConfig
from .planner import CellPath, DenseTrajectory
from .scene_io import CameraModel, Detection, LidarScan, RigidTransform, SceneBundle

__all__ = [
    "CameraModel",
    "CellPath",
    "CellState",
    "CostLevels",
    "DenseTrajectory",
    "Detection",
    "EvalConfig",
    "GridSpec",
    "LidarScan",
    "MapConfig",
    "OccupancyGrid",
    "OrchestratorConfig",
    "PlannerConfig",
    "RigidTransform",
    "RunConfig",
    "SceneBundle",
    "SemanticGrid",
    "ValueMap",
]
