"""Top-down grids: occupancy and semantics from object points, and the
three-level traversal-cost map with corridor imprinting.

Cost scheme: corridor < drivable < blocked, one decade apart, with blocked
treated as untraversable by the planner. Unknown ground is blocked. Completed
grids are immutable by convention; imprint_corridor returns a new map.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

MAX_CELLS = 4_000_000


class EmptyScene(Exception):
    """No object contributes any point to the grid."""


class SpecMismatch(Exception):
    """Grids that must share a GridSpec do not."""


class CellState(IntEnum):
    FREE = 0
    OCCUPIED = 1
    UNKNOWN = -1


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned grid: origin is the world (x, y) of cell (0, 0)'s minimum
    corner; col indexes x, row indexes y."""

    origin_x: float
    origin_y: float
    resolution: float
    rows: int
    cols: int

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError("rows and cols must be positive")
        if self.rows * self.cols > MAX_CELLS:
            raise ValueError(
                f"grid of {self.rows}x{self.cols} exceeds the {MAX_CELLS}-cell guard"
            )

    @classmethod
    def from_points(
        cls, points_xy: np.ndarray, resolution: float, margin: float
    ) -> "GridSpec":
        """Smallest grid covering the points plus a margin on every side."""
        pts = np.asarray(points_xy, dtype=np.float64)
        if pts.size == 0:
            raise EmptyScene("cannot size a grid from zero points")
        lo = pts.min(axis=0) - margin
        hi = pts.max(axis=0) + margin
        cols = int(np.ceil((hi[0] - lo[0]) / resolution)) + 1
        rows = int(np.ceil((hi[1] - lo[1]) / resolution)) + 1
        return cls(float(lo[0]), float(lo[1]), resolution, rows, cols)

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        col = int(np.floor((x - self.origin_x) / self.resolution))
        row = int(np.floor((y - self.origin_y) / self.resolution))
        return row, col

    def world_to_cells(self, xy: np.ndarray) -> np.ndarray:
        """(N, 2) world points -> (N, 2) int (row, col) pairs (may be off-grid)."""
        xy = np.asarray(xy, dtype=np.float64)
        cols = np.floor((xy[:, 0] - self.origin_x) / self.resolution).astype(np.int64)
        rows = np.floor((xy[:, 1] - self.origin_y) / self.resolution).astype(np.int64)
        return np.column_stack([rows, cols])

    def contains(self, row: int, col: int) -> bool:
        return 0 <= row < self.rows and 0 <= col < self.cols

    def contains_many(self, cells: np.ndarray) -> np.ndarray:
        return (
            (cells[:, 0] >= 0)
            & (cells[:, 0] < self.rows)
            & (cells[:, 1] >= 0)
            & (cells[:, 1] < self.cols)
        )

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        x = self.origin_x + (col + 0.5) * self.resolution
        y = self.origin_y + (row + 0.5) * self.resolution
        return x, y

    def cell_centers(self, rows: np.ndarray, cols: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = self.origin_x + (np.asarray(cols, dtype=np.float64) + 0.5) * self.resolution
        y = self.origin_y + (np.asarray(rows, dtype=np.float64) + 0.5) * self.resolution
        return x, y

    def extent(self) -> tuple[float, float, float, float]:
        """(x_min, x_max, y_min, y_max) of the grid in world coordinates."""
        return (
            self.origin_x,
            self.origin_x + self.cols * self.resolution,
            self.origin_y,
            self.origin_y + self.rows * self.resolution,
        )

    def to_dict(self) -> dict:
        return {
            "origin_x": self.origin_x,
            "origin_y": self.origin_y,
            "resolution": self.resolution,
            "rows": self.rows,
            "cols": self.cols,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(
            float(d["origin_x"]),
            float(d["origin_y"]),
            float(d["resolution"]),
            int(d["rows"]),
            int(d["cols"]),
        )


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    spec: GridSpec
    cells: np.ndarray  # int8 of CellState values


@dataclass(frozen=True, eq=False)
class SemanticGrid:
    spec: GridSpec
    cells: np.ndarray  # int32 detection id, -1 where unlabeled


@dataclass(frozen=True)
class CostLevels:
    corridor: float = 1.0
    drivable: float = 10.0
    blocked: float = 1000.0

    def __post_init__(self):
        if not (0 < self.corridor < self.drivable < self.blocked):
            raise ValueError("cost levels must satisfy 0 < corridor < drivable < blocked")

    def to_dict(self) -> dict:
        return {"corridor": self.corridor, "drivable": self.drivable, "blocked": self.blocked}

    @classmethod
    def from_dict(cls, d: dict) -> "CostLevels":
        return cls(float(d["corridor"]), float(d["drivable"]), float(d["blocked"]))


@dataclass(frozen=True, eq=False)
class ValueMap:
    spec: GridSpec
    cost: np.ndarray  # float64 per-meter traversal cost
    levels: CostLevels = field(default_factory=CostLevels)

    def is_blocked(self, row: int, col: int) -> bool:
        return bool(self.cost[row, col] >= self.levels.blocked)

    def blocked_mask(self) -> np.ndarray:
        return self.cost >= self.levels.blocked


def footprint_cells(points_world: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Unique in-grid (row, col) cells covered by the points, row-major order."""
    cells = spec.world_to_cells(points_world[:, :2])
    cells = cells[spec.contains_many(cells)]
    if cells.shape[0] == 0:
        return cells.reshape(0, 2)
    flat = cells[:, 0] * spec.cols + cells[:, 1]
    uniq = np.unique(flat)
    return np.column_stack([uniq // spec.cols, uniq % spec.cols])


def _ground_reference(objects, drivable_ids: set[int]) -> float:
    zs = [
        obj.points_world[:, 2]
        for obj in objects
        if obj.detection_id in drivable_ids and obj.points_world.shape[0]
    ]
    if not zs:
        return 0.0
    return float(np.median(np.concatenate(zs)))


def build_occupancy(
    bundle,
    objects,
    spec: GridSpec,
    height_band: tuple[float, float] = (0.3, 2.5),
) -> OccupancyGrid:
    """Rasterize object points: obstacle points inside the height band mark
    cells OCCUPIED, drivable-region points mark cells FREE, the rest stay
    UNKNOWN. OCCUPIED wins where both apply.

    The band is measured above the local ground level, estimated as the median
    z of all drivable-region points (0 when there are none).
    """
    if not any(obj.points_world.shape[0] for obj in objects):
        raise EmptyScene("no object has any world point")

    drivable_ids = set(bundle.drivable_ids())
    ground = _ground_reference(objects, drivable_ids)
    z_lo, z_hi = ground + height_band[0], ground + height_band[1]

    cells = np.full((spec.rows, spec.cols), CellState.UNKNOWN, dtype=np.int8)

    for obj in objects:
        if obj.detection_id not in drivable_ids:
            continue
        fp = footprint_cells(obj.points_world, spec)
        cells[fp[:, 0], fp[:, 1]] = CellState.FREE

    for obj in objects:
        if obj.detection_id in drivable_ids:
            continue
        pts = obj.points_world
        band = (pts[:, 2] >= z_lo) & (pts[:, 2] <= z_hi)
        if not band.any():
            continue
        fp = footprint_cells(pts[band], spec)
        cells[fp[:, 0], fp[:, 1]] = CellState.OCCUPIED

    return OccupancyGrid(spec=spec, cells=cells)


def build_semantic(bundle, objects, spec: GridSpec) -> SemanticGrid:
    """Label each covered cell with its object's id; overlapping footprints go
    to the object whose centroid is nearest the cell center (lower id on ties,
    since objects are scanned in id order with a strict improvement rule)."""
    cells = np.full((spec.rows, spec.cols), -1, dtype=np.int32)
    best_d2 = np.full((spec.rows, spec.cols), np.inf)

    for obj in sorted(objects, key=lambda o: o.detection_id):
        fp = footprint_cells(obj.points_world, spec)
        if fp.shape[0] == 0:
            continue
        cx, cy = spec.cell_centers(fp[:, 0], fp[:, 1])
        d2 = (cx - obj.centroid[0]) ** 2 + (cy - obj.centroid[1]) ** 2
        better = d2 < best_d2[fp[:, 0], fp[:, 1]]
        rows, cols = fp[better, 0], fp[better, 1]
        cells[rows, cols] = obj.detection_id
        best_d2[rows, cols] = d2[better]

    return SemanticGrid(spec=spec, cells=cells)


def init_value_map(
    occ: OccupancyGrid,
    sem: SemanticGrid,
    drivable_ids: set[int],
    levels: CostLevels | None = None,
) -> ValueMap:
    """Fuse occupancy and semantics into the three-level cost map.

    Occupied cells are blocked; free cells labeled with a drivable id cost
    the drivable level; everything else (unknown, non-drivable ground) is
    blocked like an obstacle.
    """
    if occ.spec != sem.spec:
        raise SpecMismatch("occupancy and semantic grids use different specs")
    levels = levels or CostLevels()

    cost = np.full(occ.cells.shape, levels.blocked, dtype=np.float64)
    drivable_sem = np.isin(sem.cells, np.array(sorted(drivable_ids), dtype=np.int32))
    cost[(occ.cells == CellState.FREE) & drivable_sem] = levels.drivable
    cost[occ.cells == CellState.OCCUPIED] = levels.blocked
    return ValueMap(spec=occ.spec, cost=cost, levels=levels)


def clear_disc(vm: ValueMap, occ: OccupancyGrid, center: tuple[float, float], radius: float) -> ValueMap:
    """Return a map where non-occupied cells within radius of center cost at
    most the drivable level. Used to make the vehicle's own footprint
    plannable when the scan leaves it unobserved."""
    if radius <= 0:
        return vm
    spec = vm.spec
    rows = np.arange(spec.rows)
    cols = np.arange(spec.cols)
    cy = spec.origin_y + (rows + 0.5) * spec.resolution
    cx = spec.origin_x + (cols + 0.5) * spec.resolution
    d2 = (cy[:, None] - center[1]) ** 2 + (cx[None, :] - center[0]) ** 2
    near = d2 <= radius * radius
    cost = vm.cost.copy()
    clearable = near & (occ.cells != CellState.OCCUPIED) & (cost > vm.levels.drivable)
    cost[clearable] = vm.levels.drivable
    return replace(vm, cost=cost)


def imprint_corridor(
    vm: ValueMap, coarse: np.ndarray, radius: float
) -> ValueMap:
    """Lower drivable cells within radius of any coarse segment to the
    corridor cost. Blocked cells never change; returns a new map."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    coarse = np.asarray(coarse, dtype=np.float64)
    if coarse.ndim != 2 or coarse.shape[0] == 0:
        raise ValueError("coarse polyline must be a non-empty (N, 2) array")

    spec = vm.spec
    cost = vm.cost.copy()
    res = spec.resolution
    segments = (
        [(coarse[i], coarse[i + 1]) for i in range(coarse.shape[0] - 1)]
        if coarse.shape[0] > 1
        else [(coarse[0], coarse[0])]
    )

    for a, b in segments:
        x_lo = min(a[0], b[0]) - radius - res
        x_hi = max(a[0], b[0]) + radius + res
        y_lo = min(a[1], b[1]) - radius - res
        y_hi = max(a[1], b[1]) + radius + res
        r0 = max(0, int(np.floor((y_lo - spec.origin_y) / res)))
        r1 = min(spec.rows - 1, int(np.ceil((y_hi - spec.origin_y) / res)))
        c0 = max(0, int(np.floor((x_lo - spec.origin_x) / res)))
        c1 = min(spec.cols - 1, int(np.ceil((x_hi - spec.origin_x) / res)))
        if r0 > r1 or c0 > c1:
            continue

        rr = np.arange(r0, r1 + 1)
        cc = np.arange(c0, c1 + 1)
        cy = spec.origin_y + (rr + 0.5) * res
        cx = spec.origin_x + (cc + 0.5) * res
        gx, gy = np.meshgrid(cx, cy)
        d = _segment_distance(gx, gy, a, b)
        window = cost[r0 : r1 + 1, c0 : c1 + 1]
        hit = (d <= radius) & (window == vm.levels.drivable)
        window[hit] = vm.levels.corridor

    return replace(vm, cost=cost)


def _segment_distance(px: np.ndarray, py: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    dx, dy = bx - ax, by - ay
    den = dx * dx + dy * dy
    if den == 0.0:
        return np.hypot(px - ax, py - ay)
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / den, 0.0, 1.0)
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


# ---------------------------------------------------------------------------
# Map file formats: a JSON header plus a row-major cell array.
# ---------------------------------------------------------------------------

def save_occupancy(occ: OccupancyGrid, path: str | Path) -> Path:
    path = Path(path)
    doc = {"kind": "occupancy", "spec": occ.spec.to_dict(), "cells": occ.cells.ravel().tolist()}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True) + "\n")
    return path


def load_occupancy(path: str | Path) -> OccupancyGrid:
    doc = json.loads(Path(path).read_text())
    spec = GridSpec.from_dict(doc["spec"])
    cells = np.asarray(doc["cells"], dtype=np.int8).reshape(spec.rows, spec.cols)
    return OccupancyGrid(spec=spec, cells=cells)


def save_semantic(sem: SemanticGrid, path: str | Path) -> Path:
    path = Path(path)
    doc = {"kind": "semantic", "spec": sem.spec.to_dict(), "cells": sem.cells.ravel().tolist()}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True) + "\n")
    return path


def load_semantic(path: str | Path) -> SemanticGrid:
    doc = json.loads(Path(path).read_text())
    spec = GridSpec.from_dict(doc["spec"])
    cells = np.asarray(doc["cells"], dtype=np.int32).reshape(spec.rows, spec.cols)
    return SemanticGrid(spec=spec, cells=cells)


def save_value_map(vm: ValueMap, path: str | Path) -> Path:
    path = Path(path)
    doc = {
        "kind": "value",
        "spec": vm.spec.to_dict(),
        "costs": vm.levels.to_dict(),
        "cells": vm.cost.ravel().tolist(),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True) + "\n")
    return path


def load_value_map(path: str | Path) -> ValueMap:
    doc = json.loads(Path(path).read_text())
    spec = GridSpec.from_dict(doc["spec"])
    cost = np.asarray(doc["cells"], dtype=np.float64).reshape(spec.rows, spec.cols)
    return ValueMap(spec=spec, cost=cost, levels=CostLevels.from_dict(doc["costs"]))
