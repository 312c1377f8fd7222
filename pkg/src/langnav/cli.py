"""Command-line surface: build-map, plan, eval, ablate, render.

Exit codes are a stable contract: 0 success, 2 input or validation error,
3 runtime or client error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bev_map, metrics, orchestrator, planner, render, scene_io
from .chat import ClientError, LiveChatClient, ScriptedChatClient
from .config import MapConfig, OrchestratorConfig, PlannerConfig, RunConfig

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RUNTIME = 3


class InputError(Exception):
    pass


class RuntimeFailure(Exception):
    pass


def _orchestrator_config(args) -> OrchestratorConfig:
    map_cfg = MapConfig(
        resolution=args.resolution,
        margin=args.margin,
        height_band=(args.z_min, args.z_max),
        corridor_radius=args.corridor_radius,
    )
    planner_cfg = PlannerConfig(
        robot_radius=args.robot_radius,
        start_clear_radius=args.start_clear_radius,
    )
    return OrchestratorConfig(
        max_retries=args.max_retries, map=map_cfg, planner=planner_cfg
    )


def _add_tunables(p: argparse.ArgumentParser) -> None:
    p.add_argument("--resolution", type=float, default=MapConfig.resolution)
    p.add_argument("--margin", type=float, default=MapConfig.margin)
    p.add_argument("--z-min", type=float, default=MapConfig.height_band[0])
    p.add_argument("--z-max", type=float, default=MapConfig.height_band[1])
    p.add_argument("--corridor-radius", type=float, default=MapConfig.corridor_radius)
    p.add_argument("--robot-radius", type=float, default=PlannerConfig.robot_radius)
    p.add_argument("--start-clear-radius", type=float, default=PlannerConfig.start_clear_radius)
    p.add_argument("--max-retries", type=int, default=OrchestratorConfig.max_retries)
    p.add_argument("--seed", type=int, default=0)


def _load_validated_scene(path: str) -> scene_io.SceneBundle:
    try:
        bundle = scene_io.load_scene_bundle(path)
    except FileNotFoundError as exc:
        raise InputError(f"scene file not found: {path}") from exc
    except scene_io.SceneLoadError as exc:
        raise InputError(f"{type(exc).__name__}: {exc}") from exc
    report = scene_io.validate_scene(bundle)
    if report:
        codes = "\n".join(f"{i.code}: {i.detail}" for i in report.issues)
        raise InputError(f"scene failed validation:\n{codes}")
    return bundle


def _make_client(args):
    if args.client == "scripted":
        if not args.transcript:
            raise InputError("--client scripted requires --transcript")
        transcript = Path(args.transcript)
        if not transcript.exists():
            raise InputError(f"transcript file not found: {transcript}")
        return ScriptedChatClient.from_file(transcript)
    if not args.endpoint:
        raise InputError("--client live requires --endpoint")
    return LiveChatClient(endpoint=args.endpoint, model=args.model)


def _write_run_config(out_dir: Path, args, cfg: OrchestratorConfig) -> None:
    run = RunConfig(
        mode=getattr(args, "mode", "opennav"),
        client=getattr(args, "client", "scripted"),
        transcript=getattr(args, "transcript", None),
        endpoint=getattr(args, "endpoint", None),
        model=getattr(args, "model", "gpt-4o"),
        seed=args.seed,
        orchestrator=cfg,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(json.dumps(run.to_dict(), indent=2, sort_keys=True) + "\n")


def cmd_build_map(args) -> int:
    bundle = _load_validated_scene(args.scene)
    cfg = _orchestrator_config(args)
    ctx = orchestrator.prepare_scene(bundle, cfg)
    vm = bev_map.init_value_map(ctx.occupancy, ctx.semantic, set(bundle.drivable_ids()), cfg.map.costs)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bev_map.save_occupancy(ctx.occupancy, out / "occupancy.json")
    bev_map.save_semantic(ctx.semantic, out / "semantic.json")
    bev_map.save_value_map(vm, out / "valuemap.json")
    render.render_map(vm, out / "render.png", title=f"scene {bundle.scene_id}")
    _write_run_config(out, args, cfg)
    print(f"wrote occupancy, semantic, value map, and render to {out}")
    return EXIT_OK


def cmd_plan(args) -> int:
    bundle = _load_validated_scene(args.scene)
    cfg = _orchestrator_config(args)
    out = Path(args.out)

    if args.goal is not None:
        if args.mode != "astar_only":
            raise InputError("--goal (client bypass) is only valid with --mode astar_only")
        try:
            gx, gy = (float(v) for v in args.goal.split(","))
        except ValueError as exc:
            raise InputError("--goal must be 'x,y'") from exc
        result = orchestrator.plan_to_goal(bundle, (gx, gy), cfg, out_dir=out)
    else:
        if not args.instruction:
            raise InputError("--instruction is required unless --goal is given")
        client = _make_client(args)
        result = orchestrator.run_ablation(
            bundle, args.instruction, client, args.mode, cfg, out_dir=out
        )

    _write_run_config(out, args, cfg)
    if not result.status.ok:
        raise RuntimeFailure(f"episode failed ({result.status.reason}): {result.status.detail}")
    print(f"episode succeeded; artifacts in {out}")
    return EXIT_OK


def _load_eval_episodes(manifest_path: Path, base: Path) -> list[metrics.EvalEpisode]:
    rows = json.loads(manifest_path.read_text())
    if not isinstance(rows, list) or not rows:
        raise InputError("eval manifest must be a non-empty JSON list")
    episodes = []
    for i, row in enumerate(rows):
        pred_path = base / row["pred"]
        if not pred_path.exists():
            raise InputError(f"manifest row {i}: prediction file not found: {pred_path}")
        pred, _ = planner.load_trajectory(pred_path)
        gt_traj = None
        if row.get("gt_trajectory"):
            gt_traj = np.asarray(json.loads((base / row["gt_trajectory"]).read_text()), dtype=np.float64)
        occ = None
        if row.get("occupancy"):
            occ = bev_map.load_occupancy(base / row["occupancy"])
        episodes.append(
            metrics.EvalEpisode(
                scene_id=row.get("scene_id", f"episode_{i}"),
                pred=pred,
                gt_endpoint=tuple(row["gt_endpoint"]) if row.get("gt_endpoint") else None,
                gt_trajectory=gt_traj,
                occupancy=occ,
                task_type=row.get("task_type", ""),
            )
        )
    return episodes


def cmd_eval(args) -> int:
    manifest = Path(args.episodes)
    if not manifest.exists():
        raise InputError(f"episodes manifest not found: {manifest}")
    episodes = _load_eval_episodes(manifest, manifest.parent)
    cfg = metrics.EvalConfig(success_threshold=args.success_threshold, ndtw_dth=args.ndtw_dth)
    report = metrics.evaluate_batch(episodes, cfg, robot_radius=args.robot_radius)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "report.json", out / "report.txt")
    print(report.to_text())
    return EXIT_OK


def cmd_ablate(args) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.exists():
        raise InputError(f"instruction manifest not found: {manifest_path}")
    rows = json.loads(manifest_path.read_text())
    if not isinstance(rows, list) or not rows:
        raise InputError("instruction manifest must be a non-empty JSON list")

    cfg = _orchestrator_config(args)
    base = manifest_path.parent
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    modes = args.modes.split(",")
    for mode in modes:
        if mode not in orchestrator.MODES:
            raise InputError(f"unknown mode '{mode}'")

    reports: dict[str, metrics.EvalReport] = {}
    eval_cfg = metrics.EvalConfig()
    for mode in modes:
        episodes = []
        for i, row in enumerate(rows):
            scene = _load_validated_scene(str(base / row["scene"]))
            transcript = row.get("transcript")
            if transcript is None:
                raise InputError(f"manifest row {i}: scripted client requires a 'transcript' entry")
            transcript_path = base / transcript
            if not transcript_path.exists():
                raise InputError(f"manifest row {i}: transcript file not found: {transcript_path}")
            client = ScriptedChatClient.from_file(transcript_path)
            ep_dir = out / mode / scene.scene_id
            result = orchestrator.run_ablation(
                scene, row["instruction"], client, mode, cfg, out_dir=ep_dir
            )
            ctx_occ = result.occupancy
            gt_traj = np.asarray(row["gt_trajectory"], dtype=np.float64) if row.get("gt_trajectory") else None
            episodes.append(
                metrics.EvalEpisode(
                    scene_id=scene.scene_id,
                    pred=result.final_trajectory if result.status.ok else None,
                    gt_endpoint=tuple(row["gt_endpoint"]) if row.get("gt_endpoint") else None,
                    gt_trajectory=gt_traj,
                    occupancy=ctx_occ,
                    task_type=row.get("task_type", ""),
                )
            )
        reports[mode] = metrics.evaluate_batch(episodes, eval_cfg, robot_radius=args.robot_radius)

    doc = {mode: rep.to_dict() for mode, rep in reports.items()}
    (out / "ablation.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    lines = ["mode        Frechet  NDTW   Coll   SR", "----        -------  ----   ----   --"]
    for mode in modes:
        agg = reports[mode].aggregates()
        frech = f"{agg['mean_frechet']:.2f}" if agg["mean_frechet"] is not None else "-"
        nd = f"{agg['mean_ndtw']:.2f}" if agg["mean_ndtw"] is not None else "-"
        lines.append(
            f"{mode:<11} {frech:<8} {nd:<6} {agg['collision_string']:<6} {agg['sr_string']}"
        )
    table = "\n".join(lines) + "\n"
    (out / "ablation.txt").write_text(table)
    print(table)
    _write_run_config(out, args, cfg)
    return EXIT_OK


def cmd_render(args) -> int:
    vm = None
    occ = None
    if args.map:
        map_path = Path(args.map)
        if not map_path.exists():
            raise InputError(f"map file not found: {map_path}")
        doc = json.loads(map_path.read_text())
        if doc.get("kind") == "occupancy":
            occ = bev_map.load_occupancy(map_path)
        else:
            vm = bev_map.load_value_map(map_path)

    trajectories = {}
    for spec in args.trajectory or []:
        if "=" not in spec:
            raise InputError("--trajectory expects label=path")
        label, path = spec.split("=", 1)
        traj_path = Path(path)
        if not traj_path.exists():
            raise InputError(f"trajectory file not found: {traj_path}")
        traj, _ = planner.load_trajectory(traj_path)
        if len(traj) == 0:
            print(f"warning: trajectory '{label}' is empty; rendering map only", file=sys.stderr)
            continue
        trajectories[label] = traj.xy()

    if args.gt:
        gt_path = Path(args.gt)
        if not gt_path.exists():
            raise InputError(f"ground-truth file not found: {gt_path}")
        trajectories["ground_truth"] = np.asarray(json.loads(gt_path.read_text()), dtype=np.float64)

    render.render_map(vm, args.out, occupancy=occ, trajectories=trajectories)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="langnav", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-map", help="build occupancy, semantic, and value maps for a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    _add_tunables(p)
    p.set_defaults(func=cmd_build_map)

    p = sub.add_parser("plan", help="run one navigation episode")
    p.add_argument("--scene", required=True)
    p.add_argument("--instruction")
    p.add_argument("--mode", choices=orchestrator.MODES, default="opennav")
    p.add_argument("--client", choices=["live", "scripted"], default="scripted")
    p.add_argument("--transcript")
    p.add_argument("--endpoint")
    p.add_argument("--model", default="gpt-4o")
    p.add_argument("--goal", help="'x,y' goal for client-free astar_only planning")
    p.add_argument("--out", required=True)
    _add_tunables(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("eval", help="evaluate predicted trajectories against ground truth")
    p.add_argument("--episodes", required=True, help="JSON manifest of evaluation rows")
    p.add_argument("--out", required=True)
    p.add_argument("--success-threshold", type=float, default=1.0)
    p.add_argument("--ndtw-dth", type=float, default=1.0)
    p.add_argument("--robot-radius", type=float, default=0.0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the three-mode comparison over a scene set")
    p.add_argument("--manifest", required=True, help="instruction manifest (scene, instruction, transcript, gt)")
    p.add_argument("--out", required=True)
    p.add_argument("--modes", default="astar_only,vlt_code,opennav")
    _add_tunables(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("render", help="render maps and trajectories to an image")
    p.add_argument("--map")
    p.add_argument("--trajectory", action="append", help="label=path, repeatable")
    p.add_argument("--gt", help="ground-truth polyline JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    except (RuntimeFailure, ClientError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
