"""Conversation-driven episode execution.

One episode is one instruction against one scene: build the scene description
and nearest-reachable-point table, hand the model a five-section task-agnostic
prompt, dispatch its replies (detection lookup, trajectory plan, or free-form
text), feed interpretation errors back verbatim, and refine the accepted plan
into a dense trajectory on the value map.

Replies are parsed for a single fenced JSON block: {"call": "det_object"}
requests the detection table; {"segments": [...], "regions": [...]} is a
trajectory plan. Anything else is treated as free-form reasoning, with a
schema nudge after repeated schema-free turns.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bev_map, geometry, planner
from .bev_map import GridSpec, OccupancyGrid, SemanticGrid, ValueMap
from .chat import ChatClient, ClientError
from .config import OrchestratorConfig
from .geometry import NrpTable, ObjectGeometry
from .scene_io import SceneBundle

MODES = ("astar_only", "vlt_code", "opennav")

SECTION_TITLES = [
    "Available Functions",
    "Environment Description",
    "Collision Avoidance Guidance",
    "Initial Planning",
    "Code Generation",
]

SYSTEM_PROMPT = """\
# Available Functions
You may use these host functions:
- det_object(): returns the detection table (captions, center positions,
  dimensions, nearest reachable points per drivable region) together with the
  annotated camera image. Call it by replying with exactly one fenced json
  block containing {"call": "det_object"}.
- A_star_plan(start, end): runs automatically once your trajectory plan is
  accepted; the host refines the plan into a collision-free route on the
  value map.
- visual_3D(traj): runs automatically after refinement; the host exports the
  final trajectory and a rendered map for verification.

# Environment Description
Coordinates are a fixed world frame in meters with z up. The robot is a
ground vehicle at the position listed in the scene table; headings are
radians, counterclockwise from +x. The camera image is annotated with one
numeric identifier per detection, matching the id column of the table.
Drivable regions are marked in the table; every other detection is an
obstacle.

# Collision Avoidance Guidance
Before planning, identify the obstacles and the traversable regions. Route
only across drivable regions and keep clear of every obstacle. Plans whose
endpoint lies in blocked space are rejected.

# Initial Planning
Reason step by step: restate the target object(s), resolve any ambiguity
using the annotated image, pick intermediate waypoints near the relevant
objects, and end at the nearest reachable point of a drivable region next to
the target.

# Code Generation
When ready, emit the trajectory plan as exactly one fenced json block:
{"segments": [...], "regions": [...]}
Segment kinds:
  {"kind": "waypoints", "points": [[x, y], ...]}
  {"kind": "line", "from": [x, y], "to": [x, y]}
  {"kind": "to_nrp", "target_detection": ID, "region": ID}
Segments are concatenated in order and each must start within 0.5 m of the
previous segment's end. "regions" lists the drivable region ids the route may
traverse. If the plan is rejected you will receive the error message; fix the
plan and resend it.
"""

NUDGE_TEXT = (
    "Reply with exactly one fenced json block: either {\"call\": \"det_object\"} "
    "or a trajectory plan {\"segments\": [...], \"regions\": [...]}."
)
CONTINUE_TEXT = "Proceed."

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_]*\s*\n(.*?)```", re.DOTALL)


class PlanError(Exception):
    """Plan rejected; the message is fed back to the model verbatim."""


class MalformedPlan(PlanError):
    pass


class UnknownDetection(PlanError):
    pass


class UnknownRegion(PlanError):
    pass


class DisconnectedSegments(PlanError):
    pass


class MissingAnnotatedImage(Exception):
    pass


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    image_ref: str

    def to_dict(self) -> dict:
        return {
            "system_text": self.system_text,
            "user_text": self.user_text,
            "image_ref": self.image_ref,
        }


@dataclass
class TrajectoryPlan:
    segments: list[dict]
    regions: list[int]

    @classmethod
    def from_obj(cls, obj: dict) -> "TrajectoryPlan":
        if not isinstance(obj, dict):
            raise MalformedPlan("plan must be a JSON object with 'segments' and 'regions'")
        segments = obj.get("segments")
        if not isinstance(segments, list) or not segments:
            raise MalformedPlan("plan needs a non-empty 'segments' list")
        regions = obj.get("regions")
        if not isinstance(regions, list):
            raise MalformedPlan("plan needs a 'regions' list of drivable region ids")
        parsed = []
        for i, seg in enumerate(segments):
            if not isinstance(seg, dict) or "kind" not in seg:
                raise MalformedPlan(f"segment {i} must be an object with a 'kind'")
            kind = seg["kind"]
            if kind == "waypoints":
                pts = seg.get("points")
                if not isinstance(pts, list) or not pts:
                    raise MalformedPlan(f"segment {i} (waypoints) needs a non-empty 'points' list")
                for p in pts:
                    if not (isinstance(p, list) and len(p) == 2):
                        raise MalformedPlan(f"segment {i} (waypoints) points must be [x, y] pairs")
            elif kind == "line":
                for key in ("from", "to"):
                    p = seg.get(key)
                    if not (isinstance(p, list) and len(p) == 2):
                        raise MalformedPlan(f"segment {i} (line) needs '{key}' as an [x, y] pair")
            elif kind == "to_nrp":
                for key in ("target_detection", "region"):
                    if not isinstance(seg.get(key), int):
                        raise MalformedPlan(f"segment {i} (to_nrp) needs integer '{key}'")
            else:
                raise MalformedPlan(f"segment {i} has unknown kind '{kind}'")
            parsed.append(seg)
        try:
            region_ids = [int(r) for r in regions]
        except (TypeError, ValueError):
            raise MalformedPlan("'regions' must contain integer detection ids")
        return cls(segments=parsed, regions=region_ids)


@dataclass
class EpisodeStatus:
    ok: bool
    reason: str | None = None  # NoPath | MaxRetriesExceeded | ClientError
    detail: str = ""

    def to_dict(self) -> dict:
        return {"ok": self.ok, "reason": self.reason, "detail": self.detail}


@dataclass
class EpisodeResult:
    mode: str
    status: EpisodeStatus
    transcript: list[dict] = field(default_factory=list)
    coarse_trajectory: np.ndarray | None = None
    plan_regions: list[int] = field(default_factory=list)
    final_trajectory: planner.DenseTrajectory | None = None
    retry_count: int = 0
    prompt: PromptBundle | None = None
    value_map: ValueMap | None = None
    occupancy: OccupancyGrid | None = None
    config_hash: str = ""
    scene_id: str = ""

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "mode": self.mode,
            "status": self.status.to_dict(),
            "retry_count": self.retry_count,
            "config_hash": self.config_hash,
            "transcript": self.transcript,
            "coarse_trajectory": (
                self.coarse_trajectory.tolist() if self.coarse_trajectory is not None else None
            ),
            "plan_regions": self.plan_regions,
            "final_trajectory": (
                self.final_trajectory.poses.tolist() if self.final_trajectory is not None else None
            ),
        }


@dataclass
class SceneContext:
    """Everything derived from the bundle before the conversation starts."""

    bundle: SceneBundle
    objects: dict[int, ObjectGeometry]
    dropped: list[int]  # detections with no LiDAR support
    spec: GridSpec
    occupancy: OccupancyGrid
    semantic: SemanticGrid
    nrp: NrpTable
    scene_text: str
    ground_z: float
    start: tuple[float, float]


def prepare_scene(scene: SceneBundle, cfg: OrchestratorConfig) -> SceneContext:
    """Extract per-object geometry, build the grids and NRP table, and render
    the deterministic scene text block."""
    objects: dict[int, ObjectGeometry] = {}
    dropped: list[int] = []
    for det in scene.detections:
        try:
            objects[det.id] = geometry.extract_object_points(
                scene.scan, det, scene.camera, scene.extrinsic, scene.vehicle_pose
            )
        except geometry.EmptyObjectPoints:
            dropped.append(det.id)

    start = (float(scene.vehicle_pose.translation[0]), float(scene.vehicle_pose.translation[1]))

    all_points = [obj.points_world[:, :2] for obj in objects.values()]
    all_points.append(np.array([start]))
    spec = GridSpec.from_points(np.vstack(all_points), cfg.map.resolution, cfg.map.margin)

    occ = bev_map.build_occupancy(scene, list(objects.values()), spec, cfg.map.height_band)
    sem = bev_map.build_semantic(scene, list(objects.values()), spec)

    drivable_ids = set(scene.drivable_ids())
    footprints = [
        (det_id, bev_map.footprint_cells(objects[det_id].points_world, spec))
        for det_id in sorted(drivable_ids)
        if det_id in objects
    ]
    targets = [objects[i] for i in sorted(objects) if i not in drivable_ids]
    nrp = geometry.build_nrp_table(targets, footprints, occ)

    drivable_z = [
        objects[i].points_world[:, 2] for i in sorted(drivable_ids) if i in objects
    ]
    ground_z = float(np.median(np.concatenate(drivable_z))) if drivable_z else 0.0

    scene_text = build_scene_text(scene, objects, dropped, nrp, start)
    return SceneContext(
        bundle=scene,
        objects=objects,
        dropped=dropped,
        spec=spec,
        occupancy=occ,
        semantic=sem,
        nrp=nrp,
        scene_text=scene_text,
        ground_z=ground_z,
        start=start,
    )


def _fmt(value: float) -> str:
    return f"{value:.3f}"


def build_scene_text(
    scene: SceneBundle,
    objects: dict[int, ObjectGeometry],
    dropped: list[int],
    nrp: NrpTable,
    start: tuple[float, float],
) -> str:
    """One deterministic row per detection: id, caption, center, dims, NRP."""
    lines = [f"Robot position: ({_fmt(start[0])}, {_fmt(start[1])})", "Detections:"]
    for det in sorted(scene.detections, key=lambda d: d.id):
        caption = det.caption + (" [drivable region]" if det.is_drivable_region else "")
        if det.id in dropped:
            lines.append(f"{det.id} | {caption} | no LiDAR support")
            continue
        obj = objects[det.id]
        center = ", ".join(_fmt(v) for v in obj.centroid)
        dims = ", ".join(_fmt(v) for v in obj.dimensions)
        entries = nrp.for_target(det.id)
        nrp_txt = (
            "{"
            + ", ".join(
                f"{rid}: ({_fmt(pt[0])}, {_fmt(pt[1])})" for rid, pt in sorted(entries.items())
            )
            + "}"
        )
        lines.append(f"{det.id} | {caption} | center ({center}) | dims ({dims}) | NRP {nrp_txt}")
    return "\n".join(lines)


def assemble_prompt(
    instruction: str,
    scene: SceneBundle,
    scene_text: str,
    annotated_image: str | Path,
) -> PromptBundle:
    """Instruction-first user text plus the fixed five-section system text."""
    image = Path(annotated_image)
    if not image.exists():
        raise MissingAnnotatedImage(f"annotated image not found: {image}")
    user_text = f"{instruction}\n\n{scene_text}"
    return PromptBundle(system_text=SYSTEM_PROMPT, user_text=user_text, image_ref=str(image))


def parse_reply(text: str) -> tuple[str, dict | None]:
    """Classify a model reply: ('det_object', None), ('plan', obj), or
    ('free_form', None). The first parseable fenced JSON block wins."""
    for match in _FENCE_RE.finditer(text):
        try:
            obj = json.loads(match.group(1))
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            if obj.get("call") == "det_object":
                return "det_object", None
            return "plan", obj
    return "free_form", None


def interpret_plan(
    plan: TrajectoryPlan,
    scene: SceneBundle,
    nrp: NrpTable,
    sample_step: float,
    start: tuple[float, float],
    chain_tolerance: float = 0.5,
) -> tuple[np.ndarray, list[int]]:
    """Resolve the plan into a densified coarse polyline plus its region ids.

    Error messages are written to be returned to the model verbatim.
    """
    known_ids = {d.id for d in scene.detections}
    drivable = set(scene.drivable_ids())

    for rid in plan.regions:
        if rid not in known_ids:
            raise UnknownRegion(f"region {rid} does not exist; drivable regions are {sorted(drivable)}")
        if rid not in drivable:
            raise UnknownRegion(f"detection {rid} is not a drivable region; use one of {sorted(drivable)}")

    points: list[np.ndarray] = []
    prev_end: np.ndarray | None = None

    for i, seg in enumerate(plan.segments):
        kind = seg["kind"]
        if kind == "waypoints":
            seg_pts = [np.asarray(p, dtype=np.float64) for p in seg["points"]]
        elif kind == "line":
            seg_pts = [
                np.asarray(seg["from"], dtype=np.float64),
                np.asarray(seg["to"], dtype=np.float64),
            ]
        else:  # to_nrp
            target = seg["target_detection"]
            region = seg["region"]
            if target not in known_ids:
                raise UnknownDetection(f"segment {i}: target detection {target} does not exist")
            if region not in drivable:
                raise UnknownRegion(
                    f"segment {i}: region {region} is not a drivable region; "
                    f"use one of {sorted(drivable)}"
                )
            entry = nrp.get(target, region)
            if entry is None:
                raise UnknownDetection(
                    f"segment {i}: no reachable point on region {region} for detection "
                    f"{target} (detection may lack LiDAR support or the region is blocked)"
                )
            seg_pts = [np.asarray(entry, dtype=np.float64)]

        if prev_end is not None and kind != "to_nrp":
            gap = float(np.linalg.norm(seg_pts[0] - prev_end))
            if gap > chain_tolerance:
                raise DisconnectedSegments(
                    f"segment {i} starts {gap:.2f} m from the end of segment {i - 1}; "
                    f"segments must chain within {chain_tolerance} m"
                )
        points.extend(seg_pts)
        prev_end = seg_pts[-1]

    coarse = np.array(points, dtype=np.float64)
    start_arr = np.asarray(start, dtype=np.float64)
    if coarse.shape[0] == 1 or float(np.linalg.norm(coarse[0] - start_arr)) > chain_tolerance:
        coarse = np.vstack([start_arr, coarse])
    coarse = planner.densify_polyline(coarse, sample_step)
    return coarse, list(plan.regions)


def lint_transcript(transcript: list[dict]) -> list[str]:
    """Check conversation-shape invariants; returns violations (empty = ok).

    Every message alternates user/assistant starting from the initial user
    prompt; every assistant reply is classified into one dispatch arm; every
    follow-up user message declares which arm produced it, and error feedback
    text matches the recorded error byte for byte.
    """
    problems = []
    if not transcript:
        return ["transcript is empty"]
    for i, msg in enumerate(transcript):
        expected = "user" if i % 2 == 0 else "assistant"
        if msg.get("role") != expected:
            problems.append(f"message {i}: expected role {expected}, got {msg.get('role')}")
        if msg.get("role") == "assistant" and msg.get("arm") not in ("plan", "det_object", "free_form"):
            problems.append(f"message {i}: assistant reply lacks a dispatch arm")
        if msg.get("role") == "user" and i > 0:
            kind = msg.get("kind")
            if kind not in ("det_object_response", "error_feedback", "nudge", "continue"):
                problems.append(f"message {i}: follow-up user message has kind {kind}")
            if kind == "error_feedback" and msg.get("error") != msg.get("text"):
                problems.append(f"message {i}: feedback text differs from recorded error")
    return problems


def _refine(
    ctx: SceneContext,
    coarse: np.ndarray,
    regions: list[int],
    mode: str,
    cfg: OrchestratorConfig,
) -> tuple[planner.DenseTrajectory, ValueMap]:
    """Turn an accepted coarse polyline into the final dense trajectory."""
    vm = bev_map.init_value_map(ctx.occupancy, ctx.semantic, set(regions), cfg.map.costs)
    vm = bev_map.clear_disc(vm, ctx.occupancy, ctx.start, cfg.planner.start_clear_radius)

    if mode == "vlt_code":
        # Coarse plan taken at face value: smoothed, never refined on the map.
        samples = planner.smooth_polyline(
            coarse, cfg.planner.ctrl_spacing, cfg.planner.sample_spacing
        )
        traj = planner.assign_headings(samples, ctx.ground_z, cfg.planner.max_pose_spacing)
        return traj, vm

    if mode == "opennav":
        vm = bev_map.imprint_corridor(vm, coarse, cfg.map.corridor_radius)

    goal = (float(coarse[-1, 0]), float(coarse[-1, 1]))
    try:
        path = planner.astar(vm, ctx.start, goal)
    except planner.PlannerError as exc:
        raise planner.NoPath(f"{type(exc).__name__}: {exc}") from exc

    if len(path.cells) == 1:
        x, y = ctx.spec.cell_center(*path.cells[0])
        poses = np.array([[x, y, ctx.ground_z, 0.0]])
        return planner.DenseTrajectory(poses=poses), vm

    polyline = planner.smooth_bspline(
        path, vm,
        ctrl_spacing=cfg.planner.ctrl_spacing,
        sample_spacing=cfg.planner.sample_spacing,
    )
    traj = planner.assign_headings(polyline, ctx.ground_z, cfg.planner.max_pose_spacing)
    return traj, vm


def run_ablation(
    scene: SceneBundle,
    instruction: str,
    client: ChatClient,
    mode: str,
    cfg: OrchestratorConfig | None = None,
    annotated_image: str | Path | None = None,
    out_dir: str | Path | None = None,
) -> EpisodeResult:
    """Run one episode in the requested trajectory-generation mode.

    astar_only plans start-to-goal on the initialized value map (the coarse
    plan contributes only its endpoint); vlt_code returns the smoothed coarse
    polyline with no map refinement; opennav imprints the corridor and refines
    with the grid planner.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    cfg = cfg or OrchestratorConfig()
    result = EpisodeResult(
        mode=mode,
        status=EpisodeStatus(ok=False, reason=None),
        config_hash=cfg.config_hash(),
        scene_id=scene.scene_id,
    )

    try:
        ctx = prepare_scene(scene, cfg)
    except bev_map.EmptyScene as exc:
        result.status = EpisodeStatus(ok=False, reason="NoPath", detail=f"scene has no geometry: {exc}")
        return result

    image = Path(annotated_image) if annotated_image else ctx.bundle.image_file()
    prompt = assemble_prompt(instruction, scene, ctx.scene_text, image)
    result.prompt = prompt

    transcript: list[dict] = [
        {"role": "user", "text": prompt.user_text, "image": prompt.image_ref, "kind": "initial"}
    ]
    result.transcript = transcript

    retries = 0
    schema_free_streak = 0
    plan_result: tuple[np.ndarray, list[int]] | None = None

    while True:
        try:
            reply = client.send(_wire_history(prompt.system_text, transcript))
        except ClientError as exc:
            result.status = EpisodeStatus(ok=False, reason="ClientError", detail=str(exc))
            result.retry_count = retries
            _maybe_export(result, ctx, out_dir, cfg)
            return result

        arm, obj = parse_reply(reply)
        transcript.append({"role": "assistant", "text": reply, "arm": arm})

        if arm == "det_object":
            schema_free_streak = 0
            transcript.append(
                {
                    "role": "user",
                    "text": ctx.scene_text,
                    "image": prompt.image_ref,
                    "kind": "det_object_response",
                }
            )
            continue

        if arm == "plan":
            schema_free_streak = 0
            try:
                plan = TrajectoryPlan.from_obj(obj)
                plan_result = interpret_plan(
                    plan, scene, ctx.nrp, cfg.plan_sample_step, ctx.start, cfg.chain_tolerance
                )
                break
            except PlanError as exc:
                feedback = str(exc)
                if retries >= cfg.max_retries:
                    result.status = EpisodeStatus(
                        ok=False, reason="MaxRetriesExceeded", detail=feedback
                    )
                    result.retry_count = retries
                    _maybe_export(result, ctx, out_dir, cfg)
                    return result
                retries += 1
                transcript.append(
                    {"role": "user", "text": feedback, "kind": "error_feedback", "error": feedback}
                )
                continue

        # Free-form reasoning: tolerated, but it consumes the retry budget and
        # earns an explicit schema nudge once it repeats.
        schema_free_streak += 1
        if retries >= cfg.max_retries:
            result.status = EpisodeStatus(
                ok=False,
                reason="MaxRetriesExceeded",
                detail=f"no structured reply after {retries} corrective prompts",
            )
            result.retry_count = retries
            _maybe_export(result, ctx, out_dir, cfg)
            return result
        retries += 1
        if schema_free_streak >= cfg.nudge_after:
            transcript.append({"role": "user", "text": NUDGE_TEXT, "kind": "nudge"})
        else:
            transcript.append({"role": "user", "text": CONTINUE_TEXT, "kind": "continue"})

    coarse, regions = plan_result
    result.coarse_trajectory = coarse
    result.plan_regions = regions
    result.retry_count = retries

    try:
        traj, vm = _refine(ctx, coarse, regions, mode, cfg)
    except planner.PlannerError as exc:
        result.status = EpisodeStatus(ok=False, reason="NoPath", detail=str(exc))
        _maybe_export(result, ctx, out_dir, cfg)
        return result

    result.final_trajectory = traj
    result.value_map = vm
    result.occupancy = ctx.occupancy
    result.status = EpisodeStatus(ok=True)
    _maybe_export(result, ctx, out_dir, cfg)
    return result


def run_episode(
    scene: SceneBundle,
    instruction: str,
    client: ChatClient,
    cfg: OrchestratorConfig | None = None,
    annotated_image: str | Path | None = None,
    out_dir: str | Path | None = None,
) -> EpisodeResult:
    """The full pipeline (corridor imprinting plus grid refinement)."""
    return run_ablation(scene, instruction, client, "opennav", cfg, annotated_image, out_dir)


def plan_to_goal(
    scene: SceneBundle,
    goal: tuple[float, float],
    cfg: OrchestratorConfig | None = None,
    out_dir: str | Path | None = None,
) -> EpisodeResult:
    """Client-free shortest-path planning to an explicit goal; all flagged
    drivable regions are traversable."""
    cfg = cfg or OrchestratorConfig()
    result = EpisodeResult(
        mode="astar_only",
        status=EpisodeStatus(ok=False),
        config_hash=cfg.config_hash(),
        scene_id=scene.scene_id,
    )
    ctx = prepare_scene(scene, cfg)
    coarse = np.array([ctx.start, goal], dtype=np.float64)
    result.coarse_trajectory = coarse
    regions = scene.drivable_ids()
    result.plan_regions = regions
    try:
        traj, vm = _refine(ctx, coarse, regions, "astar_only", cfg)
    except planner.PlannerError as exc:
        result.status = EpisodeStatus(ok=False, reason="NoPath", detail=str(exc))
        _maybe_export(result, ctx, out_dir, cfg)
        return result
    result.final_trajectory = traj
    result.value_map = vm
    result.occupancy = ctx.occupancy
    result.status = EpisodeStatus(ok=True)
    _maybe_export(result, ctx, out_dir, cfg)
    return result


def _wire_history(system_text: str, transcript: list[dict]) -> list[dict]:
    messages = [{"role": "system", "text": system_text, "image": None}]
    for msg in transcript:
        messages.append(
            {"role": msg["role"], "text": msg["text"], "image": msg.get("image")}
        )
    return messages


def _maybe_export(
    result: EpisodeResult,
    ctx: SceneContext,
    out_dir: str | Path | None,
    cfg: OrchestratorConfig,
) -> None:
    if out_dir is None:
        return
    export_episode(result, ctx, Path(out_dir), cfg)


def export_episode(
    result: EpisodeResult,
    ctx: SceneContext,
    out_dir: Path,
    cfg: OrchestratorConfig,
) -> None:
    """Write the episode artifact directory: transcript, coarse polyline,
    final trajectory, value map, and the rendered overview image."""
    out_dir.mkdir(parents=True, exist_ok=True)

    transcript_doc = {
        "scene_id": result.scene_id,
        "mode": result.mode,
        "status": result.status.to_dict(),
        "retry_count": result.retry_count,
        "config_hash": result.config_hash,
        "system_text": result.prompt.system_text if result.prompt else None,
        "messages": result.transcript,
    }
    (out_dir / "transcript.json").write_text(
        json.dumps(transcript_doc, indent=2, sort_keys=True) + "\n"
    )

    coarse_doc = {
        "points": result.coarse_trajectory.tolist() if result.coarse_trajectory is not None else [],
        "regions": result.plan_regions,
    }
    (out_dir / "coarse.json").write_text(json.dumps(coarse_doc, indent=2, sort_keys=True) + "\n")

    metadata = {
        "scene_id": result.scene_id,
        "mode": result.mode,
        "config_hash": result.config_hash,
    }
    traj = result.final_trajectory or planner.DenseTrajectory(poses=np.empty((0, 4)))
    planner.save_trajectory(traj, out_dir / "trajectory.json", metadata)

    vm = result.value_map
    if vm is None:
        vm = bev_map.init_value_map(
            ctx.occupancy, ctx.semantic, set(ctx.bundle.drivable_ids()), cfg.map.costs
        )
    bev_map.save_value_map(vm, out_dir / "valuemap.json")

    from . import render  # deferred: matplotlib import is slow

    trajectories = {}
    if result.final_trajectory is not None:
        trajectories[result.mode] = result.final_trajectory.xy()
    coarse = result.coarse_trajectory
    render.render_map(
        vm, out_dir / "render.png", trajectories=trajectories, coarse=coarse
    )
