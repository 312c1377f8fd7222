"""Per-object geometry: project scan points into masks, derive 3D attributes,
and find nearest reachable points on drivable regions.

The projection arithmetic is written with explicit component expressions (no
matmul) so scalar and vectorized paths agree bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bev_map import CellState, OccupancyGrid
from .scene_io import CameraModel, Detection, LidarScan, RigidTransform

# Relative tolerance for "point lies on a polygon edge" (boundary is inside).
EDGE_TOL = 1e-9


class EmptyObjectPoints(Exception):
    """No scan point projects into the detection's mask."""


@dataclass(frozen=True, eq=False)
class ObjectGeometry:
    """World-frame points of one detection plus centroid and box extents."""

    detection_id: int
    points_world: np.ndarray
    centroid: np.ndarray
    dimensions: np.ndarray

    def centroid_2d(self) -> np.ndarray:
        return self.centroid[:2]


@dataclass
class NrpRow:
    """Nearest reachable points of one target, keyed by drivable region id."""

    target_id: int
    entries: dict[int, tuple[float, float]] = field(default_factory=dict)
    blocked_regions: list[int] = field(default_factory=list)


@dataclass
class NrpTable:
    """All (target, region) nearest-reachable-point pairs for a scene."""

    entries: dict[tuple[int, int], tuple[float, float]] = field(default_factory=dict)
    blocked: list[tuple[int, int]] = field(default_factory=list)

    def add_row(self, row: NrpRow) -> None:
        for region_id, point in row.entries.items():
            self.entries[(row.target_id, region_id)] = point
        for region_id in row.blocked_regions:
            self.blocked.append((row.target_id, region_id))

    def get(self, target_id: int, region_id: int) -> tuple[float, float] | None:
        return self.entries.get((target_id, region_id))

    def for_target(self, target_id: int) -> dict[int, tuple[float, float]]:
        return {r: p for (t, r), p in self.entries.items() if t == target_id}


def project_point(
    l: np.ndarray, cam: CameraModel, ext: RigidTransform
) -> np.ndarray | None:
    """Project one sensor-frame point through the extrinsic and intrinsics.

    Returns the (u, v) pixel if the transformed point has positive depth and
    lands inside the image, otherwise None.
    """
    x, y, z = float(l[0]), float(l[1]), float(l[2])
    r, t = ext.rotation, ext.translation
    zc = r[2, 0] * x + r[2, 1] * y + r[2, 2] * z + t[2]
    if zc <= 0:
        return None
    xc = r[0, 0] * x + r[0, 1] * y + r[0, 2] * z + t[0]
    yc = r[1, 0] * x + r[1, 1] * y + r[1, 2] * z + t[1]
    u = cam.fx * xc / zc + cam.cx
    v = cam.fy * yc / zc + cam.cy
    if 0 <= u < cam.width and 0 <= v < cam.height:
        return np.array([u, v])
    return None


def project_points(
    points: np.ndarray, cam: CameraModel, ext: RigidTransform
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection of an (N, 3) batch.

    Returns (pixels, valid): pixels is (N, 2) with garbage rows where valid is
    False; valid marks positive depth and in-image location.
    """
    pts = np.asarray(points, dtype=np.float64)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    r, t = ext.rotation, ext.translation
    zc = r[2, 0] * x + r[2, 1] * y + r[2, 2] * z + t[2]
    xc = r[0, 0] * x + r[0, 1] * y + r[0, 2] * z + t[0]
    yc = r[1, 0] * x + r[1, 1] * y + r[1, 2] * z + t[1]
    front = zc > 0
    safe_z = np.where(front, zc, 1.0)
    u = cam.fx * xc / safe_z + cam.cx
    v = cam.fy * yc / safe_z + cam.cy
    valid = front & (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    return np.column_stack([u, v]), valid


def points_in_polygon(px: np.ndarray, py: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd membership test with the boundary counted as inside.

    px, py are parallel coordinate arrays; polygon is (K, 2) and implicitly
    closed. Horizontal edges never toggle the crossing parity; points on any
    edge (within EDGE_TOL relative to the edge extent) are inside.
    """
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    inside = np.zeros(px.shape, dtype=bool)
    on_edge = np.zeros(px.shape, dtype=bool)
    n = polygon.shape[0]
    for i in range(n):
        x1, y1 = float(polygon[i, 0]), float(polygon[i, 1])
        x2, y2 = float(polygon[(i + 1) % n, 0]), float(polygon[(i + 1) % n, 1])

        span = max(abs(x2 - x1), abs(y2 - y1), 1.0)
        cross = (px - x1) * (y2 - y1) - (py - y1) * (x2 - x1)
        within = (
            (px >= min(x1, x2) - EDGE_TOL * span)
            & (px <= max(x1, x2) + EDGE_TOL * span)
            & (py >= min(y1, y2) - EDGE_TOL * span)
            & (py <= max(y1, y2) + EDGE_TOL * span)
        )
        on_edge |= (np.abs(cross) <= EDGE_TOL * span * span) & within

        toggles = (y1 > py) != (y2 > py)
        if y1 != y2:
            x_at = x1 + (x2 - x1) * (py - y1) / (y2 - y1)
            inside ^= toggles & (px < x_at)
    return inside | on_edge


def point_in_mask(pixel: np.ndarray, det: Detection) -> bool:
    """Scalar membership of a pixel in any of the detection's polygons."""
    px = np.array([pixel[0]])
    py = np.array([pixel[1]])
    return any(bool(points_in_polygon(px, py, poly)[0]) for poly in det.polygons)


def extract_object_points(
    scan: LidarScan,
    det: Detection,
    cam: CameraModel,
    ext: RigidTransform,
    pose: RigidTransform,
) -> ObjectGeometry:
    """Keep exactly the scan points whose projection falls inside the mask,
    transformed to the world frame.

    Raises EmptyObjectPoints when the mask captures no LiDAR point; the caller
    decides whether to drop the detection.
    """
    pts = scan.points
    if pts.shape[0] == 0:
        raise EmptyObjectPoints(f"detection {det.id}: scan is empty")

    pixels, valid = project_points(pts, cam, ext)
    member = np.zeros(pts.shape[0], dtype=bool)
    if valid.any():
        idx = np.flatnonzero(valid)
        px, py = pixels[idx, 0], pixels[idx, 1]
        hit = np.zeros(idx.shape, dtype=bool)
        for poly in det.polygons:
            hit |= points_in_polygon(px, py, poly)
        member[idx[hit]] = True

    if not member.any():
        raise EmptyObjectPoints(f"detection {det.id}: no scan point projects into its mask")

    world = pose.apply(pts[member])
    lo = world.min(axis=0)
    hi = world.max(axis=0)
    return ObjectGeometry(
        detection_id=det.id,
        points_world=world,
        centroid=world.mean(axis=0),
        dimensions=hi - lo,
    )


def nearest_reachable_points(
    target: ObjectGeometry,
    drivable: list[tuple[int, np.ndarray]],
    occ: OccupancyGrid,
) -> NrpRow:
    """For each drivable region, pick the free cell center closest to the
    target centroid's 2D projection.

    drivable pairs each region's detection id with its footprint, an (K, 2)
    int array of (row, col) cells. Ties break toward the lower (row, col).
    Regions with no free cell are reported in blocked_regions and omitted.
    """
    row = NrpRow(target_id=target.detection_id)
    tx, ty = float(target.centroid[0]), float(target.centroid[1])
    spec = occ.spec

    for region_id, cells in drivable:
        cells = np.asarray(cells, dtype=np.int64)
        if cells.size == 0:
            row.blocked_regions.append(region_id)
            continue
        # Deterministic scan order: row-major, so argmin implements the tie rule.
        order = np.lexsort((cells[:, 1], cells[:, 0]))
        cells = cells[order]
        free = occ.cells[cells[:, 0], cells[:, 1]] == CellState.FREE
        if not free.any():
            row.blocked_regions.append(region_id)
            continue
        candidates = cells[free]
        cx, cy = spec.cell_centers(candidates[:, 0], candidates[:, 1])
        d2 = (cx - tx) ** 2 + (cy - ty) ** 2
        best = int(np.argmin(d2))
        row.entries[region_id] = (float(cx[best]), float(cy[best]))
    return row


def build_nrp_table(
    targets: list[ObjectGeometry],
    drivable: list[tuple[int, np.ndarray]],
    occ: OccupancyGrid,
) -> NrpTable:
    """Assemble the full per-target NRP table used in the scene description."""
    table = NrpTable()
    for target in targets:
        table.add_row(nearest_reachable_points(target, drivable, occ))
    return table
