"""A* over inflated free space with line-of-sight smoothing."""
from __future__ import annotations

import heapq
import math

import numpy as np
from scipy import ndimage

from ..errors import NoPathError
from ..mapping import Cell, OccupancyGrid
from ..world import Pose
from .strategy import segment_cells

SQRT2 = math.sqrt(2.0)
_MOVES = (
    (1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
    (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2),
)


def disk(radius_cells: float) -> np.ndarray:
    r = int(math.floor(radius_cells))
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return xx * xx + yy * yy <= radius_cells * radius_cells + 1e-9


def traversable_mask(grid: OccupancyGrid, robot_radius: float = 0.15) -> np.ndarray:
    """Free cells farther than ``robot_radius`` from every Occupied cell."""
    occ = grid.state == Cell.OCCUPIED
    rad = robot_radius / grid.resolution
    if rad > 0 and occ.any():
        occ = ndimage.binary_dilation(occ, structure=disk(rad))
    return (grid.state == Cell.FREE) & ~occ


def astar(trav: np.ndarray, start: tuple[int, int], goal: tuple[int, int]):
    """8-connected A* on ``trav`` between ``(col, row)`` cells; diagonals may not cut corners.

    Returns ``(cells, cost)`` or raises :class:`NoPathError`.  The cost is the
    canonical ``straight + sqrt(2) * diagonal`` sum, not the order-dependent running total.
    """
    h, w = trav.shape
    sx, sy = start
    gx, gy = goal
    if not (0 <= sx < w and 0 <= sy < h and trav[sy, sx]):
        raise NoPathError(f"start cell {start} is not traversable")
    if not (0 <= gx < w and 0 <= gy < h and trav[gy, gx]):
        raise NoPathError(f"goal cell {goal} is not traversable")
    flat = trav.ravel().tolist()
    s, g = sy * w + sx, gy * w + gx
    best = {s: 0.0}
    came = {s: -1}
    closed = set()

    def octile(i):
        dx, dy = abs(i % w - gx), abs(i // w - gy)
        return (dx + dy) + (SQRT2 - 2.0) * min(dx, dy)

    heap = [(octile(s), 0.0, s)]
    while heap:
        _, gcost, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if cur == g:
            break
        closed.add(cur)
        cx, cy = cur % w, cur // w
        for dx, dy, step in _MOVES:
            nx, ny = cx + dx, cy + dy
            if nx < 0 or ny < 0 or nx >= w or ny >= h:
                continue
            nb = ny * w + nx
            if not flat[nb] or nb in closed:
                continue
            if dx and dy and not (flat[cy * w + nx] and flat[ny * w + cx]):
                continue
            ng = gcost + step
            if ng < best.get(nb, math.inf):
                best[nb] = ng
                came[nb] = cur
                heapq.heappush(heap, (ng + octile(nb), ng, nb))
    else:
        raise NoPathError(f"no path from {start} to {goal}")
    if g not in came:
        raise NoPathError(f"no path from {start} to {goal}")
    cells = []
    cur = g
    while cur != -1:
        cells.append((cur % w, cur // w))
        cur = came[cur]
    cells.reverse()
    return cells, cells_cost(cells)


def cells_cost(cells) -> float:
    """Canonical octile cost of a cell path: straight moves + sqrt(2) * diagonal moves."""
    straight = diag = 0
    for (x0, y0), (x1, y1) in zip(cells, cells[1:]):
        if x0 != x1 and y0 != y1:
            diag += 1
        else:
            straight += 1
    return straight + SQRT2 * diag


def line_of_sight(trav: np.ndarray, geom, a, b) -> bool:
    h, w = trav.shape
    for ix, iy in segment_cells(geom, a, b):
        if not (0 <= ix < w and 0 <= iy < h and trav[iy, ix]):
            return False
    return True


def smooth_path(trav: np.ndarray, geom, points):
    """Greedy shortcutting: from each kept point jump to the farthest visible later point."""
    if len(points) <= 2:
        return list(points)
    out = [points[0]]
    i = 0
    n = len(points)
    while i < n - 1:
        j = n - 1
        while j > i + 1 and not line_of_sight(trav, geom, points[i], points[j]):
            j -= 1
        out.append(points[j])
        i = j
    return out


def nearest_traversable(trav: np.ndarray, cell, max_radius: int):
    """Closest traversable cell to ``cell`` within ``max_radius`` cells (ties in raster order)."""
    x, y = cell
    h, w = trav.shape
    if 0 <= x < w and 0 <= y < h and trav[y, x]:
        return cell
    r0, r1 = max(0, y - max_radius), min(h, y + max_radius + 1)
    c0, c1 = max(0, x - max_radius), min(w, x + max_radius + 1)
    rows, cols = np.nonzero(trav[r0:r1, c0:c1])
    if rows.size == 0:
        return None
    d2 = (rows + r0 - y) ** 2 + (cols + c0 - x) ** 2
    j = int(np.argmin(d2))
    if d2[j] > max_radius * max_radius:
        return None
    return (int(cols[j] + c0), int(rows[j] + r0))


def path_length(points) -> float:
    return sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(points, points[1:]))


class Planner:
    """Plans on one snapshot of the grid; reuses the inflated mask and its components."""

    def __init__(self, grid: OccupancyGrid, robot_radius: float = 0.15, snap_radius: float = 0.5):
        self.grid = grid
        self.geom = grid.geometry
        self.trav = traversable_mask(grid, robot_radius)
        self.snap = max(1, int(round(snap_radius / grid.resolution)))
        self._components = None

    @property
    def components(self) -> np.ndarray:
        if self._components is None:
            # diagonal moves never cut corners, so reachability is 4-connectivity
            self._components, _ = ndimage.label(self.trav)
        return self._components

    def plan(self, start, goal, smooth: bool = True):
        """Waypoints (cell centres) from ``start`` to ``goal`` world points."""
        s = nearest_traversable(self.trav, self.geom.world_to_cell(*start), self.snap)
        g = nearest_traversable(self.trav, self.geom.world_to_cell(*goal), self.snap)
        if s is None:
            raise NoPathError(f"robot at {start} is not near traversable space")
        if g is None:
            raise NoPathError(f"goal {goal} is not near traversable space")
        comp = self.components
        if comp[s[1], s[0]] != comp[g[1], g[0]]:
            raise NoPathError(f"goal {goal} is not connected to {start}")
        cells, _ = astar(self.trav, s, g)
        pts = [tuple(map(float, self.geom.cell_to_world(x, y))) for x, y in cells]
        return smooth_path(self.trav, self.geom, pts) if smooth else pts


def plan_path(grid: OccupancyGrid, start: Pose, goal, robot_radius: float = 0.15):
    """A* path from the robot pose to ``goal`` over inflated free space, smoothed."""
    return Planner(grid, robot_radius).plan(start.xy, goal)
