"""Trajectory evaluation: navigation error, success rate, discrete Frechet
distance, normalized DTW, and batch reports.

All similarity metrics run on the 2D (x, y) projection; z is ground elevation,
not a navigation degree of freedom.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bev_map import OccupancyGrid
from .planner import DenseTrajectory, check_collisions


class EmptyTrajectory(Exception):
    pass


class EmptyInput(Exception):
    pass


@dataclass(frozen=True)
class EvalConfig:
    success_threshold: float = 1.0  # meters
    ndtw_dth: float = 1.0  # meters

    def __post_init__(self):
        if self.success_threshold <= 0 or self.ndtw_dth <= 0:
            raise ValueError("thresholds must be positive")


def navigation_error(pred: DenseTrajectory, gt_end) -> float:
    """Euclidean distance between the final pose position and the ground-truth
    endpoint (2D when gt_end has 2 components)."""
    if len(pred) == 0:
        raise EmptyTrajectory("predicted trajectory has no poses")
    gt = np.asarray(gt_end, dtype=np.float64)
    final = pred.poses[-1, : gt.shape[0]]
    return float(np.linalg.norm(final - gt))


def success(pred: DenseTrajectory, gt_end, cfg: EvalConfig) -> bool:
    """Endpoint within the success threshold, boundary inclusive."""
    return navigation_error(pred, gt_end) <= cfg.success_threshold


def _as_polyline(p) -> np.ndarray:
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise EmptyInput("polyline must be a non-empty (N, d) array")
    return arr


def discrete_frechet(P, Q) -> float:
    """Discrete Frechet distance (coupling minimax) by the standard dynamic
    program over the pairwise-distance table."""
    P, Q = _as_polyline(P), _as_polyline(Q)
    n, m = P.shape[0], Q.shape[0]
    d = np.linalg.norm(P[:, None, :] - Q[None, :, :], axis=2)

    ca = np.empty((n, m))
    ca[0, 0] = d[0, 0]
    for j in range(1, m):
        ca[0, j] = max(ca[0, j - 1], d[0, j])
    for i in range(1, n):
        ca[i, 0] = max(ca[i - 1, 0], d[i, 0])
        for j in range(1, m):
            ca[i, j] = max(min(ca[i - 1, j], ca[i - 1, j - 1], ca[i, j - 1]), d[i, j])
    return float(ca[n - 1, m - 1])


def dtw(P, Q) -> float:
    """Dynamic time warping with Euclidean point cost, the standard
    three-move recurrence, and no window."""
    P, Q = _as_polyline(P), _as_polyline(Q)
    n, m = P.shape[0], Q.shape[0]
    d = np.linalg.norm(P[:, None, :] - Q[None, :, :], axis=2)

    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            acc[i, j] = d[i - 1, j - 1] + min(acc[i - 1, j], acc[i, j - 1], acc[i - 1, j - 1])
    return float(acc[n, m])


def ndtw(P, Q, cfg: EvalConfig) -> float:
    """exp(-DTW(P, Q) / (|Q| * d_th)) with Q as the reference polyline."""
    Q = _as_polyline(Q)
    return float(math.exp(-dtw(P, Q) / (Q.shape[0] * cfg.ndtw_dth)))


@dataclass
class EvalEpisode:
    """One row's worth of inputs for batch evaluation."""

    scene_id: str
    pred: DenseTrajectory | None
    gt_endpoint: tuple[float, float] | None = None
    gt_trajectory: np.ndarray | None = None
    occupancy: OccupancyGrid | None = None
    task_type: str = ""


@dataclass
class EvalRow:
    scene_id: str
    task_type: str = ""
    ne: float | None = None
    success: bool | None = None
    frechet: float | None = None
    ndtw: float | None = None
    collisions: int | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "task_type": self.task_type,
            "ne": self.ne,
            "success": self.success,
            "frechet": self.frechet,
            "ndtw": self.ndtw,
            "collisions": self.collisions,
            "error": self.error,
        }


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    config: EvalConfig = field(default_factory=EvalConfig)

    # Aggregates are always recomputable from rows; kept as methods so any
    # row mutation stays consistent.
    def _valid(self, attr: str) -> list[float]:
        return [getattr(r, attr) for r in self.rows if getattr(r, attr) is not None]

    def mean_ne(self, successes_only: bool = False) -> float | None:
        vals = [
            r.ne
            for r in self.rows
            if r.ne is not None and (not successes_only or r.success)
        ]
        return float(np.mean(vals)) if vals else None

    def success_fraction(self) -> float:
        if not self.rows:
            return 0.0
        return sum(1 for r in self.rows if r.success) / len(self.rows)

    def success_string(self) -> str:
        return f"{sum(1 for r in self.rows if r.success)}/{len(self.rows)}"

    def mean_frechet(self) -> float | None:
        vals = self._valid("frechet")
        return float(np.mean(vals)) if vals else None

    def mean_ndtw(self) -> float | None:
        vals = self._valid("ndtw")
        return float(np.mean(vals)) if vals else None

    def total_collisions(self) -> int:
        return int(sum(self._valid("collisions")))

    def collision_string(self) -> str:
        with_data = [r for r in self.rows if r.collisions is not None]
        colliding = sum(1 for r in with_data if r.collisions > 0)
        return f"{colliding}/{len(with_data)}"

    def aggregates(self) -> dict:
        return {
            "episodes": len(self.rows),
            "mean_ne": self.mean_ne(),
            "sr": self.success_fraction(),
            "sr_string": self.success_string(),
            "mean_frechet": self.mean_frechet(),
            "mean_ndtw": self.mean_ndtw(),
            "total_collisions": self.total_collisions(),
            "collision_string": self.collision_string(),
        }

    def to_dict(self) -> dict:
        return {
            "config": {
                "success_threshold": self.config.success_threshold,
                "ndtw_dth": self.config.ndtw_dth,
            },
            "rows": [r.to_dict() for r in self.rows],
            "aggregates": self.aggregates(),
        }

    def to_text(self) -> str:
        cols = ["scene", "task", "NE", "SR", "Frechet", "NDTW", "Coll", "error"]
        table = []
        for r in self.rows:
            table.append([
                r.scene_id,
                r.task_type or "-",
                f"{r.ne:.2f}" if r.ne is not None else "-",
                {True: "yes", False: "no"}.get(r.success, "-"),
                f"{r.frechet:.2f}" if r.frechet is not None else "-",
                f"{r.ndtw:.2f}" if r.ndtw is not None else "-",
                str(r.collisions) if r.collisions is not None else "-",
                r.error or "",
            ])
        agg = self.aggregates()
        table.append([
            "Total",
            "",
            f"{agg['mean_ne']:.2f}" if agg["mean_ne"] is not None else "-",
            agg["sr_string"],
            f"{agg['mean_frechet']:.2f}" if agg["mean_frechet"] is not None else "-",
            f"{agg['mean_ndtw']:.2f}" if agg["mean_ndtw"] is not None else "-",
            agg["collision_string"],
            "",
        ])
        widths = [max(len(row[i]) for row in [cols] + table) for i in range(len(cols))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip()]
        lines.append("  ".join("-" * w for w in widths))
        for row in table:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        return "\n".join(lines) + "\n"

    def save(self, json_path: str | Path, text_path: str | Path | None = None) -> None:
        json_path = Path(json_path)
        json_path.parent.mkdir(parents=True, exist_ok=True)
        json_path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        if text_path is not None:
            Path(text_path).write_text(self.to_text())


def evaluate_batch(
    episodes: list[EvalEpisode],
    cfg: EvalConfig | None = None,
    robot_radius: float = 0.0,
) -> EvalReport:
    """Per-episode metrics plus aggregates; row order follows the input.

    Per-episode failures (for example an empty prediction) become row-level
    error markers and are excluded from the metric means, while still counting
    in the success-rate denominator.
    """
    if not episodes:
        raise EmptyInput("need at least one episode")
    cfg = cfg or EvalConfig()
    report = EvalReport(config=cfg)

    for ep in episodes:
        row = EvalRow(scene_id=ep.scene_id, task_type=ep.task_type)
        report.rows.append(row)
        try:
            if ep.pred is None or len(ep.pred) == 0:
                raise EmptyTrajectory("no predicted trajectory")
            if ep.gt_endpoint is not None:
                row.ne = navigation_error(ep.pred, ep.gt_endpoint)
                row.success = row.ne <= cfg.success_threshold
            if ep.gt_trajectory is not None:
                row.frechet = discrete_frechet(ep.pred.xy(), ep.gt_trajectory)
                row.ndtw = ndtw(ep.pred.xy(), ep.gt_trajectory, cfg)
            if ep.occupancy is not None:
                row.collisions = check_collisions(ep.pred, ep.occupancy, robot_radius).count
        except (EmptyTrajectory, EmptyInput) as exc:
            row.error = f"{type(exc).__name__}: {exc}"
            row.success = False
    return report
