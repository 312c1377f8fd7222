"""Dataclass configs for the pipeline, with a provenance hash that pins every
tunable (including the cost-integration rule) into output metadata."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .bev_map import CostLevels

# Identifies how A* integrates cell costs along edges; recorded in the
# config hash so outputs are traceable to the rule.
EDGE_COST_RULE = "step_length*mean(endpoint_cells)"


@dataclass(frozen=True)
class MapConfig:
    resolution: float = 0.2  # meters/cell
    margin: float = 5.0  # meters of padding around the scene extent
    height_band: tuple[float, float] = (0.3, 2.5)  # meters above local ground
    corridor_radius: float = 2.0  # meters around the coarse trajectory
    costs: CostLevels = field(default_factory=CostLevels)


@dataclass(frozen=True)
class PlannerConfig:
    robot_radius: float = 0.5  # meters
    ctrl_spacing: float = 1.0  # meters between spline control points
    sample_spacing: float = 0.1  # meters between trajectory samples
    max_pose_spacing: float = 0.15  # meters between consecutive poses
    start_clear_radius: float = 3.0  # meters freed around the vehicle


@dataclass(frozen=True)
class OrchestratorConfig:
    max_retries: int = 3
    nudge_after: int = 2  # schema-free turns before the explicit nudge
    plan_sample_step: float = 0.5  # meters when densifying the coarse polyline
    chain_tolerance: float = 0.5  # meters allowed between segment seams
    map: MapConfig = field(default_factory=MapConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)

    def config_hash(self) -> str:
        doc = asdict(self)
        doc["edge_cost_rule"] = EDGE_COST_RULE
        blob = json.dumps(doc, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class RunConfig:
    """CLI-level settings; serialized into every output directory."""

    mode: str = "opennav"
    client: str = "scripted"
    transcript: str | None = None
    endpoint: str | None = None
    model: str = "gpt-4o"
    seed: int = 0
    orchestrator: OrchestratorConfig = field(default_factory=OrchestratorConfig)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["config_hash"] = self.orchestrator.config_hash()
        doc["edge_cost_rule"] = EDGE_COST_RULE
        return doc
