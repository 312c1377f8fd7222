"""Grid planning and trajectory shaping: A* over the cost map, B-spline
smoothing with blocked-cell repair, heading assignment, and collision checks.
All functions are pure; episodes can plan concurrently over shared maps.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import BSpline

from .bev_map import CellState, CostLevels, GridSpec, OccupancyGrid, ValueMap

SQRT2 = math.sqrt(2.0)
# Shrink factor keeping the heuristic strictly below any floating-point path
# sum, so the popped goal cost is the exact minimum (and matches Dijkstra).
HEURISTIC_SAFETY = 1.0 - 1e-9


class PlannerError(Exception):
    pass


class StartBlocked(PlannerError):
    pass


class GoalBlocked(PlannerError):
    pass


class NoPath(PlannerError):
    pass


class TooShort(PlannerError):
    pass


class SmoothingCollisionUnresolvable(PlannerError):
    pass


@dataclass(frozen=True, eq=False)
class CellPath:
    """8-connected cell sequence with its accumulated traversal cost."""

    cells: list[tuple[int, int]]
    total_cost: float


@dataclass(frozen=True, eq=False)
class DenseTrajectory:
    """Ordered poses (x, y, z, heading); heading k points along the chord to
    pose k+1 and the last pose copies its predecessor."""

    poses: np.ndarray

    def xy(self) -> np.ndarray:
        return self.poses[:, :2]

    def __len__(self) -> int:
        return int(self.poses.shape[0])


@dataclass
class CollisionReport:
    indices: list[int] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.indices)

    @property
    def first_index(self) -> int | None:
        return self.indices[0] if self.indices else None


_NEIGHBORS = [
    (-1, 0), (1, 0), (0, -1), (0, 1),
    (-1, -1), (-1, 1), (1, -1), (1, 1),
]


def astar(vm: ValueMap, start: tuple[float, float], goal: tuple[float, float]) -> CellPath:
    """Minimum-cost 8-connected path between the cells containing start and
    goal.

    Edge cost is step length in meters times the mean of the two endpoint
    cells' per-meter costs; the heuristic is Euclidean distance at the minimum
    (corridor) cost, so it is admissible. Diagonal steps are forbidden when
    either orthogonal neighbor is blocked. Ties break on (f, h, row, col).
    """
    spec = vm.spec
    blocked = vm.blocked_mask()
    res = spec.resolution

    s = spec.world_to_cell(*start)
    g = spec.world_to_cell(*goal)
    if not spec.contains(*s) or blocked[s]:
        raise StartBlocked(f"start {start} maps to blocked or off-grid cell {s}")
    if not spec.contains(*g) or blocked[g]:
        raise GoalBlocked(f"goal {goal} maps to blocked or off-grid cell {g}")
    if s == g:
        return CellPath(cells=[s], total_cost=0.0)

    cost = vm.cost
    h_scale = vm.levels.corridor * HEURISTIC_SAFETY

    def heuristic(r: int, c: int) -> float:
        return math.hypot((r - g[0]) * res, (c - g[1]) * res) * h_scale

    g_score = np.full((spec.rows, spec.cols), np.inf)
    g_score[s] = 0.0
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    # Entries are (f, h, row, col, g); the trailing g never affects ordering.
    open_heap: list[tuple[float, float, int, int, float]] = []
    h0 = heuristic(*s)
    heapq.heappush(open_heap, (h0, h0, s[0], s[1], 0.0))

    goal_g = np.inf
    while open_heap:
        f, h, r, c, gc = heapq.heappop(open_heap)
        if f >= goal_g:
            break
        if gc > g_score[r, c]:
            continue
        base = cost[r, c]
        for dr, dc in _NEIGHBORS:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < spec.rows and 0 <= nc < spec.cols) or blocked[nr, nc]:
                continue
            if dr != 0 and dc != 0 and (blocked[r + dr, c] or blocked[r, c + dc]):
                continue
            step = res * SQRT2 if dr != 0 and dc != 0 else res
            ng = g_score[r, c] + step * ((base + cost[nr, nc]) * 0.5)
            if ng < g_score[nr, nc]:
                g_score[nr, nc] = ng
                parent[(nr, nc)] = (r, c)
                if (nr, nc) == g:
                    goal_g = ng
                nh = heuristic(nr, nc)
                heapq.heappush(open_heap, (ng + nh, nh, nr, nc, ng))

    if not np.isfinite(g_score[g]):
        raise NoPath(f"no traversable route from cell {s} to cell {g}")

    cells = [g]
    while cells[-1] != s:
        cells.append(parent[cells[-1]])
    cells.reverse()
    return CellPath(cells=cells, total_cost=float(g_score[g]))


def _clamped_knots(n_ctrl: int, degree: int) -> np.ndarray:
    interior = n_ctrl - degree - 1
    t = np.concatenate([
        np.zeros(degree + 1),
        np.linspace(0, 1, interior + 2)[1:-1] if interior > 0 else np.empty(0),
        np.ones(degree + 1),
    ])
    return t


def _greville(knots: np.ndarray, degree: int, n_ctrl: int) -> np.ndarray:
    return np.array([knots[j + 1 : j + degree + 1].mean() if degree > 0 else knots[j]
                     for j in range(n_ctrl)])


def _sample_spline(ctrl: np.ndarray, spacing: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Evaluate the clamped B-spline through ctrl at <= spacing arc steps.

    Returns (samples, params, knots, degree).
    """
    n = ctrl.shape[0]
    degree = min(3, n - 1)
    knots = _clamped_knots(n, degree)
    spline = BSpline(knots, ctrl, degree)

    chord = float(np.sum(np.linalg.norm(np.diff(ctrl, axis=0), axis=1)))
    count = max(2, int(math.ceil(chord / (spacing * 0.5))) + 1)
    ts = np.linspace(0.0, 1.0, count)
    samples = spline(ts)
    # Refine until consecutive samples are within the arc-spacing bound.
    for _ in range(32):
        gaps = np.linalg.norm(np.diff(samples, axis=0), axis=1)
        wide = gaps > spacing
        if not wide.any():
            break
        mids = (ts[:-1][wide] + ts[1:][wide]) / 2.0
        ts = np.sort(np.concatenate([ts, mids]))
        samples = spline(ts)
    return samples, ts, knots, degree


def _blocked_sample(samples: np.ndarray, vm: ValueMap) -> int | None:
    spec = vm.spec
    cells = spec.world_to_cells(samples)
    inside = spec.contains_many(cells)
    blocked = vm.blocked_mask()
    for i in range(samples.shape[0]):
        if not inside[i]:
            return i
        if blocked[cells[i, 0], cells[i, 1]]:
            return i
    return None


def smooth_bspline(
    path: CellPath,
    vm: ValueMap,
    spec: GridSpec | None = None,
    ctrl_spacing: float = 1.0,
    sample_spacing: float = 0.1,
) -> np.ndarray:
    """Cubic clamped B-spline through the path's cell centers, endpoints
    exact, sampled at <= sample_spacing arc steps.

    Control points are the centers decimated to roughly one per ctrl_spacing
    meters. Any sample falling in a blocked cell re-inserts the decimated
    centers around the offending span and refits; if every center is restored
    and the curve still collides, the raw cell-center polyline is returned
    (it cannot collide for a valid path; if it does, the defensive
    SmoothingCollisionUnresolvable is raised).
    """
    if len(path.cells) < 2:
        raise TooShort("need at least 2 cells to smooth")
    spec = spec or vm.spec

    centers = np.array([spec.cell_center(r, c) for r, c in path.cells])

    kept = [0]
    acc = 0.0
    for i in range(1, centers.shape[0]):
        acc += float(np.linalg.norm(centers[i] - centers[i - 1]))
        if acc >= ctrl_spacing:
            kept.append(i)
            acc = 0.0
    if kept[-1] != centers.shape[0] - 1:
        kept.append(centers.shape[0] - 1)
    if len(kept) < 2:
        kept = [0, centers.shape[0] - 1]

    for _ in range(centers.shape[0] + 1):
        ctrl = centers[kept]
        samples, ts, knots, degree = _sample_spline(ctrl, sample_spacing)
        bad = _blocked_sample(samples, vm)
        if bad is None:
            return samples
        if len(kept) == centers.shape[0]:
            break
        grev = _greville(knots, degree, ctrl.shape[0])
        t_bad = ts[bad]
        j = int(np.clip(np.searchsorted(grev, t_bad) - 1, 0, len(kept) - 2))
        missing = [i for i in range(kept[j] + 1, kept[j + 1]) if i not in kept]
        if not missing:
            # Widen to the nearest span that still has centers to restore.
            missing = [i for i in range(centers.shape[0]) if i not in kept]
            missing = [min(missing, key=lambda i: abs(i - kept[j]))]
        kept = sorted(set(kept) | set(missing))

    # Full control polygon still collides: fall back to the exact polyline.
    samples = _densify(centers, sample_spacing)
    if _blocked_sample(samples, vm) is not None:
        raise SmoothingCollisionUnresolvable("cell-center polyline itself crosses a blocked cell")
    return samples


def _densify(polyline: np.ndarray, step: float) -> np.ndarray:
    pts = [polyline[0]]
    for i in range(polyline.shape[0] - 1):
        a, b = polyline[i], polyline[i + 1]
        d = float(np.linalg.norm(b - a))
        n = max(1, int(math.ceil(d / step)))
        for k in range(1, n + 1):
            pts.append(a + (b - a) * (k / n))
    return np.array(pts)


def densify_polyline(polyline: np.ndarray, step: float) -> np.ndarray:
    """Insert evenly spaced points so no chord exceeds step."""
    polyline = np.asarray(polyline, dtype=np.float64)
    if polyline.shape[0] < 2:
        return polyline
    return _densify(polyline, step)


def smooth_polyline(
    points: np.ndarray,
    ctrl_spacing: float = 1.0,
    sample_spacing: float = 0.1,
) -> np.ndarray:
    """B-spline smoothing of a raw polyline with no map awareness.

    Same fit and sampling as smooth_bspline but without the blocked-cell
    repair; used where the caller wants the shape taken at face value.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 2:
        raise TooShort("polyline needs at least 2 points")
    kept = [0]
    acc = 0.0
    for i in range(1, pts.shape[0]):
        acc += float(np.linalg.norm(pts[i] - pts[i - 1]))
        if acc >= ctrl_spacing:
            kept.append(i)
            acc = 0.0
    if kept[-1] != pts.shape[0] - 1:
        kept.append(pts.shape[0] - 1)
    if len(kept) < 2:
        kept = [0, pts.shape[0] - 1]
    samples, _, _, _ = _sample_spline(pts[kept], sample_spacing)
    return samples


def assign_headings(
    polyline: np.ndarray,
    ground_z=0.0,
    max_spacing: float = 0.15,
) -> DenseTrajectory:
    """Lift a 2D polyline into (x, y, z, heading) poses.

    Chords longer than max_spacing are subdivided first; exact duplicate
    points are dropped. ground_z is a constant elevation or a callable
    (x, y) -> z.
    """
    pts = np.asarray(polyline, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise TooShort("polyline needs at least 2 points")
    keep = np.ones(pts.shape[0], dtype=bool)
    keep[1:] = np.any(pts[1:] != pts[:-1], axis=1)
    pts = pts[keep]
    if pts.shape[0] < 2:
        raise TooShort("polyline collapses to a single distinct point")

    pts = _densify(pts, max_spacing)

    deltas = np.diff(pts, axis=0)
    headings = np.arctan2(deltas[:, 1], deltas[:, 0])
    headings = np.append(headings, headings[-1])

    if callable(ground_z):
        z = np.array([float(ground_z(x, y)) for x, y in pts])
    else:
        z = np.full(pts.shape[0], float(ground_z))

    poses = np.column_stack([pts[:, 0], pts[:, 1], z, headings])
    return DenseTrajectory(poses=poses)


def check_collisions(
    traj: DenseTrajectory,
    occ: OccupancyGrid,
    robot_radius: float = 0.5,
) -> CollisionReport:
    """Report every pose whose disc of robot_radius overlaps an occupied cell.

    With radius 0 the test degenerates to membership of the pose's own cell
    (floor mapping); poses outside the grid are not collisions.
    """
    report = CollisionReport()
    spec = occ.spec
    res = spec.resolution
    occupied = occ.cells == CellState.OCCUPIED

    for i in range(len(traj)):
        x, y = float(traj.poses[i, 0]), float(traj.poses[i, 1])
        if robot_radius <= 0:
            r, c = spec.world_to_cell(x, y)
            if spec.contains(r, c) and occupied[r, c]:
                report.indices.append(i)
            continue
        r0 = max(0, int(math.floor((y - robot_radius - spec.origin_y) / res)))
        r1 = min(spec.rows - 1, int(math.floor((y + robot_radius - spec.origin_y) / res)))
        c0 = max(0, int(math.floor((x - robot_radius - spec.origin_x) / res)))
        c1 = min(spec.cols - 1, int(math.floor((x + robot_radius - spec.origin_x) / res)))
        hit = False
        for r in range(r0, r1 + 1):
            if hit:
                break
            y_lo = spec.origin_y + r * res
            dy = max(0.0, y_lo - y, y - (y_lo + res))
            for c in range(c0, c1 + 1):
                if not occupied[r, c]:
                    continue
                x_lo = spec.origin_x + c * res
                dx = max(0.0, x_lo - x, x - (x_lo + res))
                if dx * dx + dy * dy <= robot_radius * robot_radius:
                    report.indices.append(i)
                    hit = True
                    break
    return report


# ---------------------------------------------------------------------------
# Trajectory file format: pose rows plus provenance metadata.
# ---------------------------------------------------------------------------

def save_trajectory(traj: DenseTrajectory, path: str | Path, metadata: dict | None = None) -> Path:
    path = Path(path)
    doc = {"poses": traj.poses.tolist(), "metadata": metadata or {}}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True) + "\n")
    return path


def load_trajectory(path: str | Path) -> tuple[DenseTrajectory, dict]:
    doc = json.loads(Path(path).read_text())
    poses = np.asarray(doc["poses"], dtype=np.float64)
    if poses.size == 0:
        poses = poses.reshape(0, 4)
    return DenseTrajectory(poses=poses), doc.get("metadata", {})
