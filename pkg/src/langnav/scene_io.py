"""Scene bundle format: load, validate, and serialize posed RGB-LiDAR keyframes.

A scene bundle is one JSON document per keyframe holding the camera intrinsics,
the LiDAR-to-camera extrinsic, the vehicle pose in the world frame, the raw
scan, and the 2D detections (captioned polygon masks). The field-by-field
schema lives in docs/scene_bundle_schema.md. Bundles are immutable after load
and safe to share across concurrent episode runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ROTATION_TOL = 1e-6


class SceneLoadError(Exception):
    """Base class for scene bundle parse failures."""


class MissingField(SceneLoadError):
    pass


class MalformedMask(SceneLoadError):
    pass


class NonOrthonormalRotation(SceneLoadError):
    pass


# Machine-readable validation codes emitted by validate_scene.
ROTATION_NOT_ORTHONORMAL = "ROTATION_NOT_ORTHONORMAL"
ROTATION_IMPROPER = "ROTATION_IMPROPER"
BAD_INTRINSICS = "BAD_INTRINSICS"
NON_FINITE_SCAN_POINT = "NON_FINITE_SCAN_POINT"
MASK_OUT_OF_BOUNDS = "MASK_OUT_OF_BOUNDS"
MASK_TOO_FEW_VERTICES = "MASK_TOO_FEW_VERTICES"
IDS_NOT_CONSECUTIVE = "IDS_NOT_CONSECUTIVE"
NO_DRIVABLE_REGION = "NO_DRIVABLE_REGION"
IMAGE_NOT_FOUND = "IMAGE_NOT_FOUND"


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rigid motion: rotation (3x3, det +1) plus translation (meters)."""

    rotation: np.ndarray
    translation: np.ndarray

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or a batch (N, 3)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def orthonormality_error(self) -> float:
        return float(np.abs(self.rotation.T @ self.rotation - np.eye(3)).max())

    def determinant(self) -> float:
        return float(np.linalg.det(self.rotation))

    def is_proper(self, tol: float = ROTATION_TOL) -> bool:
        return self.orthonormality_error() <= tol and abs(self.determinant() - 1.0) <= tol


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole intrinsics; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def is_valid(self) -> bool:
        return (
            self.fx > 0
            and self.fy > 0
            and 0 <= self.cx < self.width
            and 0 <= self.cy < self.height
        )


@dataclass(frozen=True, eq=False)
class LidarScan:
    """Raw scan in the sensor frame; points is an (N, 3) float64 array."""

    points: np.ndarray
    timestamp: float = 0.0

    def __len__(self) -> int:
        return int(self.points.shape[0])


@dataclass(frozen=True, eq=False)
class Detection:
    """One segmented object: id, caption, and pixel-space polygon mask(s)."""

    id: int
    caption: str
    polygons: list[np.ndarray]
    category_hint: str | None = None
    is_drivable_region: bool = False


@dataclass(frozen=True, eq=False)
class SceneBundle:
    """One timestamped observation ready for planning.

    image_path is kept as written in the file (usually relative); root is the
    directory it resolves against and is not serialized.
    """

    scene_id: str
    dataset: str
    image_path: str
    camera: CameraModel
    extrinsic: RigidTransform
    vehicle_pose: RigidTransform
    scan: LidarScan
    detections: list[Detection]
    root: Path | None = field(default=None, compare=False)

    def image_file(self) -> Path:
        p = Path(self.image_path)
        if p.is_absolute() or self.root is None:
            return p
        return self.root / p

    def detection_by_id(self, det_id: int) -> Detection | None:
        for det in self.detections:
            if det.id == det_id:
                return det
        return None

    def drivable_ids(self) -> list[int]:
        return [d.id for d in self.detections if d.is_drivable_region]


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    detail: str
    detection_id: int | None = None


@dataclass
class ValidationReport:
    issues: list[ValidationIssue] = field(default_factory=list)

    def add(self, code: str, detail: str, detection_id: int | None = None) -> None:
        self.issues.append(ValidationIssue(code, detail, detection_id))

    def codes(self) -> list[str]:
        return [i.code for i in self.issues]

    def is_clean(self) -> bool:
        return not self.issues

    def __bool__(self) -> bool:
        return bool(self.issues)


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise MissingField(f"{context}.{key}: required field is missing")
    return mapping[key]


def _load_transform(obj: dict, context: str) -> RigidTransform:
    rotation = np.asarray(_require(obj, "rotation", context), dtype=np.float64)
    translation = np.asarray(_require(obj, "translation", context), dtype=np.float64)
    if rotation.shape != (3, 3):
        raise MissingField(f"{context}.rotation: expected a 3x3 matrix, got shape {rotation.shape}")
    if translation.shape != (3,):
        raise MissingField(f"{context}.translation: expected a 3-vector")
    tf = RigidTransform(rotation, translation)
    if not tf.is_proper():
        raise NonOrthonormalRotation(
            f"{context}.rotation: not a proper rotation "
            f"(orthonormality error {tf.orthonormality_error():.3e}, det {tf.determinant():.6f})"
        )
    return tf


def _load_detection(obj: dict, index: int) -> Detection:
    context = f"detections[{index}]"
    det_id = int(_require(obj, "id", context))
    caption = str(_require(obj, "caption", context))
    raw_mask = _require(obj, "mask", context)
    if not isinstance(raw_mask, list) or not raw_mask:
        raise MalformedMask(f"{context}.mask (detection id {det_id}): expected a non-empty list of polygons")
    polygons = []
    for pi, poly in enumerate(raw_mask):
        arr = np.asarray(poly, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
            raise MalformedMask(
                f"{context}.mask[{pi}] (detection id {det_id}): "
                f"polygon must be a list of >= 3 [x, y] vertices"
            )
        if not np.isfinite(arr).all():
            raise MalformedMask(f"{context}.mask[{pi}] (detection id {det_id}): non-finite vertex")
        polygons.append(arr)
    return Detection(
        id=det_id,
        caption=caption,
        polygons=polygons,
        category_hint=obj.get("category_hint"),
        is_drivable_region=bool(obj.get("is_drivable_region", False)),
    )


def load_scene_bundle(path: str | Path) -> SceneBundle:
    """Parse a scene bundle file, enforcing the structural invariants.

    Raises MissingField, MalformedMask, or NonOrthonormalRotation with the
    offending field (and detection id where applicable) in the message.
    """
    path = Path(path)
    with open(path) as fh:
        raw = json.load(fh)

    cam_raw = _require(raw, "camera", "scene")
    camera = CameraModel(
        fx=float(_require(cam_raw, "fx", "camera")),
        fy=float(_require(cam_raw, "fy", "camera")),
        cx=float(_require(cam_raw, "cx", "camera")),
        cy=float(_require(cam_raw, "cy", "camera")),
        width=int(_require(cam_raw, "width", "camera")),
        height=int(_require(cam_raw, "height", "camera")),
    )
    extrinsic = _load_transform(_require(raw, "extrinsic", "scene"), "extrinsic")
    vehicle_pose = _load_transform(_require(raw, "vehicle_pose", "scene"), "vehicle_pose")

    scan_raw = _require(raw, "scan", "scene")
    points = np.asarray(_require(scan_raw, "points", "scan"), dtype=np.float64)
    if points.size == 0:
        points = points.reshape(0, 3)
    if points.ndim != 2 or points.shape[1] != 3:
        raise MissingField("scan.points: expected an (N, 3) array")
    scan = LidarScan(points=points, timestamp=float(scan_raw.get("timestamp", 0.0)))

    detections = [_load_detection(d, i) for i, d in enumerate(_require(raw, "detections", "scene"))]

    bundle = SceneBundle(
        scene_id=str(_require(raw, "scene_id", "scene")),
        dataset=str(raw.get("dataset", "")),
        image_path=str(_require(raw, "image_path", "scene")),
        camera=camera,
        extrinsic=extrinsic,
        vehicle_pose=vehicle_pose,
        scan=scan,
        detections=detections,
        root=path.parent,
    )
    if not bundle.image_file().exists():
        raise MissingField(f"image_path: referenced image not found: {bundle.image_file()}")
    return bundle


def save_scene_bundle(bundle: SceneBundle, path: str | Path) -> Path:
    """Write a bundle back to its JSON form (inverse of load_scene_bundle)."""
    path = Path(path)
    doc = {
        "scene_id": bundle.scene_id,
        "dataset": bundle.dataset,
        "image_path": bundle.image_path,
        "camera": {
            "fx": bundle.camera.fx,
            "fy": bundle.camera.fy,
            "cx": bundle.camera.cx,
            "cy": bundle.camera.cy,
            "width": bundle.camera.width,
            "height": bundle.camera.height,
        },
        "extrinsic": {
            "rotation": bundle.extrinsic.rotation.tolist(),
            "translation": bundle.extrinsic.translation.tolist(),
        },
        "vehicle_pose": {
            "rotation": bundle.vehicle_pose.rotation.tolist(),
            "translation": bundle.vehicle_pose.translation.tolist(),
        },
        "scan": {
            "timestamp": bundle.scan.timestamp,
            "points": bundle.scan.points.tolist(),
        },
        "detections": [
            {
                "id": det.id,
                "caption": det.caption,
                "mask": [poly.tolist() for poly in det.polygons],
                "category_hint": det.category_hint,
                "is_drivable_region": det.is_drivable_region,
            }
            for det in bundle.detections
        ],
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def validate_scene(bundle: SceneBundle) -> ValidationReport:
    """Sweep every invariant and report violations; never raises.

    An empty report means the bundle is planner-ready.
    """
    report = ValidationReport()

    for name, tf in (("extrinsic", bundle.extrinsic), ("vehicle_pose", bundle.vehicle_pose)):
        err = tf.orthonormality_error()
        if err > ROTATION_TOL:
            report.add(ROTATION_NOT_ORTHONORMAL, f"{name}: orthonormality error {err:.3e}")
        elif abs(tf.determinant() - 1.0) > ROTATION_TOL:
            report.add(ROTATION_IMPROPER, f"{name}: determinant {tf.determinant():.6f}")

    if not bundle.camera.is_valid():
        report.add(BAD_INTRINSICS, "camera: need fx, fy > 0 and principal point inside the image")

    if bundle.scan.points.size and not np.isfinite(bundle.scan.points).all():
        bad = int(np.argwhere(~np.isfinite(bundle.scan.points).all(axis=1))[0][0])
        report.add(NON_FINITE_SCAN_POINT, f"scan.points[{bad}] contains a non-finite coordinate")

    w, h = bundle.camera.width, bundle.camera.height
    for det in bundle.detections:
        for pi, poly in enumerate(det.polygons):
            if poly.shape[0] < 3:
                report.add(
                    MASK_TOO_FEW_VERTICES,
                    f"detection {det.id} mask[{pi}] has {poly.shape[0]} vertices",
                    det.id,
                )
                continue
            inside = (poly[:, 0] >= 0) & (poly[:, 0] <= w) & (poly[:, 1] >= 0) & (poly[:, 1] <= h)
            if not inside.all():
                vi = int(np.argwhere(~inside)[0][0])
                report.add(
                    MASK_OUT_OF_BOUNDS,
                    f"detection {det.id} mask[{pi}] vertex {vi} at "
                    f"({poly[vi, 0]:.1f}, {poly[vi, 1]:.1f}) lies outside {w}x{h}",
                    det.id,
                )

    ids = [det.id for det in bundle.detections]
    if sorted(ids) != list(range(len(ids))):
        report.add(IDS_NOT_CONSECUTIVE, f"detection ids {ids} are not consecutive from 0")

    if not any(det.is_drivable_region for det in bundle.detections):
        report.add(NO_DRIVABLE_REGION, "no detection is flagged is_drivable_region")

    if not bundle.image_file().exists():
        report.add(IMAGE_NOT_FOUND, f"image file not found: {bundle.image_file()}")

    return report
