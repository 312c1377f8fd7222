"""Programmatic construction of small street-like scenes.

Scenes are authored in world coordinates (flat ground at z = 0, box-shaped
obstacles, a forward-facing camera 1.6 m above the sensor origin). The scan is
point-sampled geometry with occlusion culling behind obstacles; each
detection's mask is the convex hull of its surviving projected pixels, so
the bundles round-trip cleanly through the projection pipeline.
"""

from __future__ import annotations

import json
import zlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull

from .geometry import points_in_polygon, project_points
from .scene_io import CameraModel, Detection, LidarScan, RigidTransform, SceneBundle

# Sensor-to-camera frame: camera looks along +x of the sensor, z up.
CAM_ROTATION = np.array([
    [0.0, -1.0, 0.0],
    [0.0, 0.0, -1.0],
    [1.0, 0.0, 0.0],
])
SENSOR_HEIGHT = 1.6


@dataclass
class BoxObject:
    """Axis-aligned box sitting on the ground plane."""

    caption: str
    center_xy: tuple[float, float]
    size: tuple[float, float, float]  # (length-x, width-y, height-z)
    category: str | None = None

    def sample_points(self, step: float = 0.15) -> np.ndarray:
        cx, cy = self.center_xy
        lx, ly, h = self.size
        xs = np.arange(cx - lx / 2, cx + lx / 2 + 1e-9, step)
        ys = np.arange(cy - ly / 2, cy + ly / 2 + 1e-9, step)
        zs = np.arange(0.0, h + 1e-9, step)
        pts = []
        # Vertical faces.
        for x in (xs[0], xs[-1]):
            gy, gz = np.meshgrid(ys, zs)
            pts.append(np.column_stack([np.full(gy.size, x), gy.ravel(), gz.ravel()]))
        for y in (ys[0], ys[-1]):
            gx, gz = np.meshgrid(xs, zs)
            pts.append(np.column_stack([gx.ravel(), np.full(gx.size, y), gz.ravel()]))
        # Top face.
        gx, gy = np.meshgrid(xs, ys)
        pts.append(np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, h)]))
        return np.vstack(pts)


@dataclass
class GroundRegion:
    """Rectangular patch of drivable ground at z = 0."""

    caption: str
    x_range: tuple[float, float]
    y_range: tuple[float, float]

    def sample_points(self, step: float = 0.2) -> np.ndarray:
        xs = np.arange(self.x_range[0], self.x_range[1] + 1e-9, step)
        ys = np.arange(self.y_range[0], self.y_range[1] + 1e-9, step)
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])


@dataclass
class SceneSpec:
    scene_id: str
    ground: list[GroundRegion] = field(default_factory=list)
    obstacles: list[BoxObject] = field(default_factory=list)
    camera: CameraModel = field(
        default_factory=lambda: CameraModel(fx=400.0, fy=400.0, cx=320.0, cy=240.0, width=640, height=480)
    )
    # Sampling steps must not exceed the planning grid resolution, or the
    # rasterized coverage acquires pinholes.
    ground_step: float = 0.2
    obstacle_step: float = 0.15


def _hull_polygon(pixels: np.ndarray, pad: float, cam: CameraModel) -> np.ndarray:
    if pixels.shape[0] < 3:
        raise ValueError("need at least 3 projected pixels for a mask")
    hull = ConvexHull(pixels)
    poly = pixels[hull.vertices]
    center = poly.mean(axis=0)
    offset = poly - center
    norms = np.maximum(np.linalg.norm(offset, axis=1, keepdims=True), 1e-9)
    poly = poly + offset / norms * pad
    poly[:, 0] = np.clip(poly[:, 0], 0.0, cam.width)
    poly[:, 1] = np.clip(poly[:, 1], 0.0, cam.height)
    return poly


def build_scene(spec: SceneSpec, out_dir: str | Path) -> SceneBundle:
    """Assemble and write a scene bundle (plus its placeholder image).

    Obstacle masks are tight hulls of their own pixels; points of other
    surfaces that project behind an obstacle's mask are culled, mimicking
    occlusion, so obstacle masks never capture foreign geometry.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cam = spec.camera
    ext = RigidTransform(CAM_ROTATION, np.zeros(3))
    pose = RigidTransform(np.eye(3), np.array([0.0, 0.0, SENSOR_HEIGHT]))
    world_to_sensor = pose.inverse()

    groups: list[tuple[str, str | None, bool, np.ndarray]] = []
    for region in spec.ground:
        groups.append((region.caption, "road", True, region.sample_points(spec.ground_step)))
    for box in spec.obstacles:
        groups.append((box.caption, box.category, False, box.sample_points(spec.obstacle_step)))

    sensor_pts = [world_to_sensor.apply(pts) for _, _, _, pts in groups]
    projections = [project_points(pts, cam, ext) for pts in sensor_pts]

    # Occlusion culling: drop points that project inside an obstacle's hull at
    # greater depth than the obstacle itself.
    keep = [valid.copy() for _, valid in projections]
    for oi, (caption, _, drivable, _) in enumerate(groups):
        if drivable:
            continue
        pix_o, valid_o = projections[oi]
        if valid_o.sum() < 3:
            continue
        hull = _hull_polygon(pix_o[valid_o], pad=0.0, cam=cam)
        # Opaque from its front face: anything deeper that projects into the
        # silhouette is occluded.
        depth_front = float(sensor_pts[oi][valid_o][:, 0].min())
        for gi in range(len(groups)):
            if gi == oi:
                continue
            pix_g, _ = projections[gi]
            depth_g = sensor_pts[gi][:, 0]
            candidates = keep[gi] & (depth_g > depth_front)
            if not candidates.any():
                continue
            idx = np.flatnonzero(candidates)
            inside = points_in_polygon(pix_g[idx, 0], pix_g[idx, 1], hull)
            keep[gi][idx[inside]] = False

    detections = []
    scan_parts = []
    for det_id, ((caption, category, drivable, _), pts_sensor) in enumerate(zip(groups, sensor_pts)):
        pix, _ = projections[det_id]
        kept = keep[det_id]
        if kept.sum() < 3:
            raise ValueError(f"object '{caption}' is not visible enough to form a mask")
        poly = _hull_polygon(pix[kept], pad=0.0, cam=cam)
        detections.append(
            Detection(
                id=det_id,
                caption=caption,
                polygons=[poly],
                category_hint=category,
                is_drivable_region=drivable,
            )
        )
        scan_parts.append(pts_sensor[kept])

    scan = LidarScan(points=np.vstack(scan_parts), timestamp=0.0)

    image_name = f"{spec.scene_id}.png"
    write_placeholder_png(out_dir / image_name, 64, 48)

    bundle = SceneBundle(
        scene_id=spec.scene_id,
        dataset="synthetic",
        image_path=image_name,
        camera=cam,
        extrinsic=ext,
        vehicle_pose=pose,
        scan=scan,
        detections=detections,
        root=out_dir,
    )
    return bundle


def write_placeholder_png(path: str | Path, width: int, height: int) -> Path:
    """Minimal valid grayscale PNG, written without an imaging dependency."""
    path = Path(path)
    row = b"\x00" + bytes([200] * width)
    raw = row * height

    def chunk(tag: bytes, payload: bytes) -> bytes:
        return (
            struct.pack(">I", len(payload))
            + tag
            + payload
            + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
        )

    header = struct.pack(">IIBBBBB", width, height, 8, 0, 0, 0, 0)
    png = (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", header)
        + chunk(b"IDAT", zlib.compress(raw))
        + chunk(b"IEND", b"")
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(png)
    return path


# ---------------------------------------------------------------------------
# A parametric task family: drive past a waypoint marker, around an obstacle,
# to the reachable side of a target vehicle. Used by experiments and tests.
# ---------------------------------------------------------------------------

@dataclass
class TaskScene:
    bundle: SceneBundle
    instruction: str
    plan_reply: str
    gt_trajectory: np.ndarray
    gt_endpoint: tuple[float, float]
    target_id: int
    road_id: int


def make_task_scene(seed: int, out_dir: str | Path) -> TaskScene:
    """Build one seeded waypoint-detour scene with its scripted plan reply and
    a hand-drawn reference trajectory.

    Layout guarantees: the straight leg from waypoint to goal clips the
    mid-road van, the reference route swings under it, the target car sits
    against the road edge so its reachable side faces north, and the direct
    start-goal line ignores the waypoint entirely.
    """
    rng = np.random.default_rng(seed)

    way = np.array([9.5 + rng.uniform(-0.8, 0.8), 4.5 + rng.uniform(-0.4, 0.4)])
    ox = 15.5 + rng.uniform(-0.6, 0.6)
    oy = 0.6 + rng.uniform(-0.15, 0.15)
    obstacle_size = (2.2, 3.8, 1.8)
    tx = 23.5 + rng.uniform(-0.7, 0.7)
    ty = -8.2  # against the southern road edge: only the north side is free

    spec = SceneSpec(
        scene_id=f"task_{seed:03d}",
        ground=[GroundRegion("paved road", (2.0, 30.0), (-9.0, 9.0))],
        obstacles=[
            BoxObject("stone statue", (way[0] + 0.8, 8.0), (1.0, 1.0, 2.0), "statue"),
            BoxObject("parked gray van", (ox, oy), obstacle_size, "vehicle"),
            BoxObject("red car", (tx, ty), (3.6, 1.8, 1.5), "vehicle"),
        ],
    )
    bundle = build_scene(spec, out_dir)

    road_id = 0
    target_id = 3

    instruction = "Drive toward the stone statue on your left, then go to the red car."

    plan = {
        "segments": [
            {"kind": "waypoints", "points": [[float(way[0]), float(way[1])]]},
            {"kind": "to_nrp", "target_detection": target_id, "region": road_id},
        ],
        "regions": [road_id],
    }
    plan_reply = "Heading past the statue, then to the car.\n```json\n" + json.dumps(plan) + "\n```"

    # Reference route, drawn from the layout (not the planner): straight out
    # to the waypoint with a rounded turn, a dip hugging the van's south face,
    # then on to the free cell row north of the car.
    start = np.zeros(2)
    end = np.array([tx, ty + 1.1])
    d_in = (way - start) / np.linalg.norm(way - start)
    d_out = (end - way) / np.linalg.norm(end - way)
    p_in = way - 2.2 * d_in
    p_out = way + 2.2 * d_out
    corner = (p_in + 2.0 * way + p_out) / 4.0

    dip_y = oy - obstacle_size[1] / 2.0 - 0.55

    def leg_point(x: float) -> np.ndarray:
        s = (x - way[0]) / d_out[0]
        return way + s * d_out

    gt = np.array([
        start,
        0.5 * (start + way),
        p_in,
        corner,
        p_out,
        leg_point(ox - 2.8),
        [ox - 1.3, dip_y],
        [ox + 1.3, dip_y],
        leg_point(ox + 3.2),
        end,
    ])
    gt_endpoint = (float(end[0]), float(end[1]))

    return TaskScene(
        bundle=bundle,
        instruction=instruction,
        plan_reply=plan_reply,
        gt_trajectory=gt,
        gt_endpoint=gt_endpoint,
        target_id=target_id,
        road_id=road_id,
    )
