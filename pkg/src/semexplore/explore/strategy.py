"""Semantics-aware RRT frontier generation and next-best-view scoring."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from ..derived import SemanticMap, region_of
from ..errors import EmptyFrontierError, OutOfExtentError
from ..mapping import Cell, OccupancyGrid
from ..world import Pose

SEMANTIC = "semantic"
BASELINE_RRT = "baseline_rrt"
MODES = (SEMANTIC, BASELINE_RRT)
_UNK, _OCC = int(Cell.UNKNOWN), int(Cell.OCCUPIED)


@dataclass
class StrategyConfig:
    k: float = 0.1  # 1/s, growth rate of the semantic sampling probability
    reward_A: float = 5.0
    gain_weight: float = 3.0
    gain_window: float = 3.0  # m, side of the information-gain square
    step: float = 0.5  # m
    frontier_merge_radius: float = 0.5  # m
    mode: str = SEMANTIC
    extension_attempts: int = 50  # per tick
    robot_radius: float = 0.15  # m, obstacle inflation for planning
    speed: float = 0.5  # m/s
    tick: float = 0.5  # s
    replan_stall: float = 0.5  # s of standing still per NBV selection
    goal_patience: float = 15.0  # s before an unreached goal is re-evaluated
    semantic_period: float = 2.0  # s between semantic map rebuilds
    skeleton_period: float = 10.0  # s between skeleton rebuilds
    reset_tree: bool = True
    goal_stale_radius: float = 2.0  # m, goal stays alive while a frontier cell lies this close
    stall_timeout: float = 60.0  # s without any reachable frontier before giving up
    log_decisions: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == BASELINE_RRT:
            self.k = 0.0
            self.reward_A = 0.0
        if self.k < 0 or self.reward_A < 0:
            raise ValueError("k and reward_A must be non-negative")
        if self.gain_window <= 0 or self.step <= 0:
            raise ValueError("gain_window and step must be positive")


class RrtTree:
    """Exploration tree rooted at the robot position; nodes are kept in a growable array."""

    def __init__(self, root, step: float, capacity: int = 256):
        self.step = float(step)
        self._xy = np.empty((capacity, 2))
        self._xy[0] = root
        self.parent = [-1]
        self.n = 1

    @property
    def root(self) -> tuple[float, float]:
        return (float(self._xy[0, 0]), float(self._xy[0, 1]))

    @property
    def nodes(self) -> np.ndarray:
        return self._xy[: self.n]

    def __len__(self) -> int:
        return self.n

    def nearest(self, p) -> tuple[int, float]:
        d = self.nodes - p
        d2 = np.einsum("ij,ij->i", d, d)
        i = int(np.argmin(d2))
        return i, float(math.sqrt(d2[i]))

    def add(self, p, parent: int) -> int:
        if self.n == len(self._xy):
            self._xy = np.vstack([self._xy, np.empty_like(self._xy)])
        self._xy[self.n] = p
        self.parent.append(parent)
        self.n += 1
        return self.n - 1

    def edges(self):
        return [(self.parent[i], i) for i in range(1, self.n)]


@dataclass
class FrontierPoint:
    position: tuple[float, float]
    born_at: float = 0.0
    gain: float = 0.0
    cost: float = 0.0
    flag: bool = False
    score: float = 0.0


@dataclass
class ExplorationState:
    pose: Pose
    tree: RrtTree
    rng: np.random.Generator
    now: float = 0.0
    region_id: int | None = None
    region_entry_time: float = 0.0
    frontiers: list[FrontierPoint] = field(default_factory=list)
    trajectory: list[tuple[float, float, float]] = field(default_factory=list)  # (t, x, y)

    @property
    def t_in_region(self) -> float:
        return max(0.0, self.now - self.region_entry_time)

    def update_region(self, rid: int | None) -> None:
        """Restart the in-region clock when the robot is seen in a different labelled region."""
        if rid is not None and rid != self.region_id:
            self.region_id = rid
            self.region_entry_time = self.now


def sampling_probabilities(k: float, t: float) -> tuple[float, float]:
    """``(p(P_sam = P_r), p(P_sam = P_s))`` for rate ``k`` after ``t`` seconds in the region."""
    kt = k * t
    p_r = 1.0 / (1.0 + kt)
    return p_r, 1.0 - p_r


def sample_point(state: ExplorationState, cfg: StrategyConfig, bounds, p_s=None):
    """Pick the tree's growth target: ``p_s`` with probability kt/(1+kt), else a uniform point."""
    _, prob_s = sampling_probabilities(cfg.k, state.t_in_region)
    u = state.rng.random()
    if p_s is not None and u < prob_s:
        return p_s
    xmin, ymin, xmax, ymax = bounds
    x, y = state.rng.uniform((xmin, ymin), (xmax, ymax))
    return (float(x), float(y))


def open_unknown(grid: OccupancyGrid) -> np.ndarray:
    """Unknown cells, minus the gaps a 3x3 closing of the obstacles would fill.

    Distant or grazing beams skip single cells of a wall face; those holes can
    never be observed and would otherwise stay frontiers for good.
    """
    unk = grid.state == Cell.UNKNOWN
    occ = grid.state == Cell.OCCUPIED
    if occ.any():
        unk &= ~ndimage.binary_closing(occ, structure=np.ones((3, 3), bool), border_value=0)
    return unk


def frontier_mask(grid: OccupancyGrid) -> np.ndarray:
    """Free cells with at least one (open) Unknown cell among their 8 neighbours."""
    unk = np.pad(open_unknown(grid), 1)
    near = np.zeros(grid.geometry.shape, dtype=bool)
    h, w = grid.geometry.shape
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr or dc:
                near |= unk[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]
    return near & (grid.state == Cell.FREE)


def segment_cells(geom, p0, p1):
    """Cells crossed by the segment p0->p1 in order (grid traversal, corners count both sides)."""
    res = geom.resolution
    x0 = (p0[0] - geom.origin[0]) / res + 0.5
    y0 = (p0[1] - geom.origin[1]) / res + 0.5
    x1 = (p1[0] - geom.origin[0]) / res + 0.5
    y1 = (p1[1] - geom.origin[1]) / res + 0.5
    ix, iy = int(math.floor(x0)), int(math.floor(y0))
    ex, ey = int(math.floor(x1)), int(math.floor(y1))
    cells = [(ix, iy)]
    dx, dy = x1 - x0, y1 - y0
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    tdx = abs(1.0 / dx) if dx else math.inf
    tdy = abs(1.0 / dy) if dy else math.inf
    tmx = ((ix + 1 - x0) if dx > 0 else (x0 - ix)) * tdx if dx else math.inf
    tmy = ((iy + 1 - y0) if dy > 0 else (y0 - iy)) * tdy if dy else math.inf
    n = abs(ex - ix) + abs(ey - iy)
    for _ in range(n):
        if abs(tmx - tmy) < 1e-12:
            # exact corner crossing: include both side cells
            cells.append((ix + sx, iy))
            cells.append((ix, iy + sy))
            ix += sx
            iy += sy
            tmx += tdx
            tmy += tdy
            cells.append((ix, iy))
            if (ix, iy) == (ex, ey):
                break
            continue
        if tmx < tmy:
            ix += sx
            tmx += tdx
        else:
            iy += sy
            tmy += tdy
        cells.append((ix, iy))
        if (ix, iy) == (ex, ey):
            break
    return cells


class GrowEvent(NamedTuple):
    kind: str  # "node", "frontier" or "blocked"
    point: tuple[float, float] | None


def grow_tree_step(state: ExplorationState, grid: OccupancyGrid, target, cfg: StrategyConfig,
                   min_spacing: float | None = None) -> GrowEvent:
    """Extend the nearest node one ``step`` toward ``target``.

    Walking the cells of the extension: an Occupied cell blocks it; reaching an
    Unknown cell emits a frontier at the centre of the last Free cell before it;
    otherwise a node is added unless one already lies within ``min_spacing``.
    """
    tree = state.tree
    geom = grid.geometry
    tgt = np.asarray(target, dtype=float)
    i, dist = tree.nearest(tgt)
    if dist < 1e-12:
        return GrowEvent("blocked", None)
    start = tree.nodes[i]
    new = start + (tgt - start) * (cfg.step / dist)
    last_free = None
    states = grid.state
    w, h = geom.width, geom.height
    for ix, iy in segment_cells(geom, start, new):
        if not (0 <= ix < w and 0 <= iy < h):
            return GrowEvent("blocked", None)
        s = states[iy, ix]
        if s == _OCC:
            return GrowEvent("blocked", None)
        if s == _UNK:
            if last_free is None:
                return GrowEvent("blocked", None)
            return GrowEvent("frontier", geom.cell_to_world(*last_free))
        last_free = (ix, iy)
    spacing = 0.5 * cfg.step if min_spacing is None else min_spacing
    if spacing > 0 and tree.nearest(new)[1] < spacing:
        return GrowEvent("blocked", None)
    tree.add(new, i)
    return GrowEvent("node", (float(new[0]), float(new[1])))


def frontier_valid(grid: OccupancyGrid, p, fmask: np.ndarray | None = None) -> bool:
    ix, iy = grid.geometry.world_to_cell(*p)
    if not grid.geometry.in_extent(ix, iy):
        return False
    if fmask is not None:
        return bool(fmask[iy, ix])
    return bool(frontier_mask(grid)[iy, ix])


def detect_frontiers(state: ExplorationState, grid: OccupancyGrid, sem: SemanticMap | None,
                     cfg: StrategyConfig, events=(), fmask: np.ndarray | None = None,
                     banned: set | None = None) -> list[FrontierPoint]:
    """Merge new frontier events into ``state.frontiers``, dropping duplicates and stale points."""
    fmask = frontier_mask(grid) if fmask is None else fmask
    geom = grid.geometry
    kept = [f for f in state.frontiers if frontier_valid(grid, f.position, fmask)]
    r2 = cfg.frontier_merge_radius ** 2
    pts = [f.position for f in kept]
    for p in events:
        if not frontier_valid(grid, p, fmask):
            continue
        if banned and geom.world_to_cell(*p) in banned:
            continue
        if any((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 < r2 for q in pts):
            continue
        kept.append(FrontierPoint((float(p[0]), float(p[1])), born_at=state.now))
        pts.append(p)
    state.frontiers = kept
    return kept


def semantic_frontier_point(grid: OccupancyGrid, sem: SemanticMap | None, pose: Pose,
                            fmask: np.ndarray | None = None):
    """Closest frontier cell centre inside the robot's current region, or ``None``."""
    if sem is None:
        return None
    try:
        rid = region_of(sem, grid, pose.xy)
    except OutOfExtentError:
        return None
    if rid is None:
        return None
    fmask = frontier_mask(grid) if fmask is None else fmask
    rows, cols = np.nonzero(fmask & (sem.labels == rid))
    if rows.size == 0:
        return None
    xs, ys = grid.geometry.cell_to_world(cols, rows)
    d2 = (xs - pose.x) ** 2 + (ys - pose.y) ** 2
    j = int(np.argmin(d2))  # ties resolve to raster order
    return (float(xs[j]), float(ys[j]))


class GainField:
    """Summed-area table of unknown cells for O(1) window counts."""

    def __init__(self, grid: OccupancyGrid):
        self.geometry = grid.geometry
        unk = (grid.state == Cell.UNKNOWN).astype(np.int64)
        self.sat = np.zeros((unk.shape[0] + 1, unk.shape[1] + 1), dtype=np.int64)
        self.sat[1:, 1:] = unk.cumsum(0).cumsum(1)
        g = self.geometry
        self._xs = g.origin[0] + np.arange(g.width) * g.resolution
        self._ys = g.origin[1] + np.arange(g.height) * g.resolution

    def window(self, p, side: float) -> tuple[int, int, int, int]:
        """Index ranges ``(c0, c1, r0, r1)`` (half-open) of cell centres in ``[p - side/2, p + side/2)``.

        Bounds are found against the stored centre coordinates, so ties on a
        window edge resolve the same way as a direct comparison would.
        """
        half = 0.5 * side
        c0, c1 = np.searchsorted(self._xs, (p[0] - half, p[0] + half), side="left")
        r0, r1 = np.searchsorted(self._ys, (p[1] - half, p[1] + half), side="left")
        return int(c0), int(c1), int(r0), int(r1)

    def gain(self, p, side: float) -> float:
        c0, c1, r0, r1 = self.window(p, side)
        if c1 <= c0 or r1 <= r0:
            return 0.0
        s = self.sat
        unknown = int(s[r1, c1] - s[r0, c1] - s[r1, c0] + s[r0, c0])
        known = (c1 - c0) * (r1 - r0) - unknown
        return (unknown - known) * self.geometry.cell_area


def info_gain(grid: OccupancyGrid, p, cfg: StrategyConfig, field: GainField | None = None) -> float:
    """Unknown area minus known area (m^2) in the square window around ``p``."""
    if not grid.geometry.contains_point(*p):
        raise OutOfExtentError(f"point {p} outside the map extent")
    field = GainField(grid) if field is None else field
    return field.gain(p, cfg.gain_window)


def path_cost(pose: Pose, p) -> float:
    return math.hypot(p[0] - pose.x, p[1] - pose.y)


def evaluate(gain: float, cost: float, flag: bool, cfg: StrategyConfig) -> float:
    reward = cfg.reward_A if flag else -cfg.reward_A
    return cfg.gain_weight * gain - cost + reward


def score_frontier(f: FrontierPoint, pose: Pose, sem: SemanticMap | None, grid: OccupancyGrid,
                   cfg: StrategyConfig, field: GainField | None = None, robot_region=...) -> float:
    """Fill in gain, cost, same-region flag and score of ``f``; returns the score."""
    if robot_region is ...:
        robot_region = region_of(sem, grid, pose.xy) if sem is not None else None
    here = region_of(sem, grid, f.position) if sem is not None else None
    f.gain = info_gain(grid, f.position, cfg, field)
    f.cost = path_cost(pose, f.position)
    f.flag = robot_region is not None and here == robot_region
    f.score = evaluate(f.gain, f.cost, f.flag, cfg)
    return f.score


def select_nbv(frontiers, pose: Pose, sem: SemanticMap | None, grid: OccupancyGrid,
               cfg: StrategyConfig, field: GainField | None = None) -> FrontierPoint:
    """Highest score wins; ties go to the lower cost, then the lexicographically smaller position."""
    if not frontiers:
        raise EmptyFrontierError("no frontier points to choose from")
    field = GainField(grid) if field is None else field
    robot_region = region_of(sem, grid, pose.xy) if sem is not None else None
    for f in frontiers:
        score_frontier(f, pose, sem, grid, cfg, field, robot_region)
    return min(frontiers, key=lambda f: (-f.score, f.cost, f.position))
