"""Static map and trajectory rendering (PNG/SVG via matplotlib Agg)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import BoundaryNorm, ListedColormap

from .bev_map import CellState, OccupancyGrid, ValueMap

# Per-mode trajectory colors; ground truth is always black.
MODE_COLORS = {
    "astar_only": "green",
    "vlt_code": "gold",
    "opennav": "red",
    "ground_truth": "black",
}


def _cost_image(vm: ValueMap):
    levels = vm.levels
    cmap = ListedColormap(["#f2e9c9", "#a8c6a0", "#3b3b4a"])
    bounds = [0.0, (levels.corridor + levels.drivable) / 2,
              (levels.drivable + levels.blocked) / 2, levels.blocked + 1.0]
    return cmap, BoundaryNorm(bounds, cmap.N)


def render_map(
    vm: ValueMap | None,
    out_path: str | Path,
    occupancy: OccupancyGrid | None = None,
    trajectories: dict[str, np.ndarray] | None = None,
    coarse: np.ndarray | None = None,
    title: str | None = None,
) -> Path:
    """Render a cost or occupancy heat map with optional trajectory overlays.

    Trajectory keys pick the drawing color from MODE_COLORS (unknown keys get
    default colors from the cycle); a legend is added when anything is drawn.
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    fig, ax = plt.subplots(figsize=(8, 6))
    drew_legend_item = False

    if vm is not None:
        x0, x1, y0, y1 = vm.spec.extent()
        cmap, norm = _cost_image(vm)
        ax.imshow(vm.cost, origin="lower", extent=(x0, x1, y0, y1), cmap=cmap, norm=norm,
                  interpolation="nearest", aspect="equal")
    elif occupancy is not None:
        x0, x1, y0, y1 = occupancy.spec.extent()
        img = np.zeros(occupancy.cells.shape)
        img[occupancy.cells == CellState.FREE] = 0.0
        img[occupancy.cells == CellState.UNKNOWN] = 0.5
        img[occupancy.cells == CellState.OCCUPIED] = 1.0
        ax.imshow(img, origin="lower", extent=(x0, x1, y0, y1), cmap="Greys",
                  interpolation="nearest", aspect="equal", vmin=0.0, vmax=1.0)

    if coarse is not None and len(coarse) > 0:
        coarse = np.asarray(coarse)
        ax.plot(coarse[:, 0], coarse[:, 1], linestyle="--", color="royalblue",
                linewidth=1.2, label="coarse plan")
        drew_legend_item = True

    for label, xy in (trajectories or {}).items():
        xy = np.asarray(xy)
        if xy.shape[0] == 0:
            continue
        color = MODE_COLORS.get(label)
        ax.plot(xy[:, 0], xy[:, 1], color=color, linewidth=2.0, label=label)
        ax.plot(xy[0, 0], xy[0, 1], marker="o", color=color or "black", markersize=5)
        ax.plot(xy[-1, 0], xy[-1, 1], marker="*", color=color or "black", markersize=10)
        drew_legend_item = True

    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    if title:
        ax.set_title(title)
    if drew_legend_item:
        ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return out_path
