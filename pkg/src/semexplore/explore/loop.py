"""Closed exploration loop: sense, map, segment, grow, select, plan, move."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..derived import (
    SegmentationParams,
    SemanticMap,
    SkeletonMap,
    build_semantic_map,
    preprocess_binary,
    region_of,
    thin_skeleton,
)
from ..errors import EmptyFrontierError, NoPathError, OutOfExtentError, StallError
from ..mapping import (
    ImageMap,
    LogOddsParams,
    OccupancyGrid,
    PointCloud3D,
    accumulate_points,
    grid_to_image,
    integrate_scan,
)
from ..world import Pose, SimClock, WorldSpec, advance_along_path, raycast_scan, true_free_mask
from .planner import Planner, path_length
from .strategy import (
    ExplorationState,
    FrontierPoint,
    GainField,
    RrtTree,
    StrategyConfig,
    detect_frontiers,
    frontier_mask,
    grow_tree_step,
    sample_point,
    select_nbv,
    semantic_frontier_point,
)

log = logging.getLogger(__name__)


@dataclass
class Limits:
    target_rate: float = 0.98
    max_sim_time: float = 2400.0  # s
    max_trajectory: float = math.inf  # m


@dataclass(frozen=True)
class TimelineRow:
    sim_time: float
    trajectory_len: float
    explored_free_cells: int
    exploration_rate: float
    robot_region: int | None
    goal: tuple[float, float] | None


@dataclass
class Decision:
    """One NBV selection: every candidate's terms and the chosen position."""

    sim_time: float
    candidates: list[tuple[tuple[float, float], float, float, bool, float]]  # (pos, G, C, flag, S)
    chosen: tuple[float, float]


@dataclass
class ExplorationResult:
    world: WorldSpec
    config: StrategyConfig
    seed: int
    resolution: float
    timeline: list[TimelineRow]
    trajectory: list[tuple[float, float, float, float]]  # (t, x, y, theta)
    grid: OccupancyGrid
    image: ImageMap
    skeleton: SkeletonMap
    semantic: SemanticMap
    cloud: PointCloud3D
    first_known: np.ndarray  # sim time each cell left Unknown, inf if never
    truth: np.ndarray
    status: str = "running"  # "target", "limit" or "stall"
    replans: int = 0
    decisions: list[Decision] = field(default_factory=list)
    sampled_semantic: int = 0
    sampling_decisions: int = 0
    goal_outcomes: dict[str, int] = field(default_factory=lambda: {"reached": 0, "stale": 0, "timeout": 0, "unreachable": 0})

    @property
    def final_rate(self) -> float:
        return self.timeline[-1].exploration_rate if self.timeline else 0.0

    @property
    def trajectory_length(self) -> float:
        return self.timeline[-1].trajectory_len if self.timeline else 0.0


def _frontier_near(fmask: np.ndarray, ix: int, iy: int, r: int) -> bool:
    if r <= 0:
        return bool(fmask[iy, ix])
    return bool(fmask[max(iy - r, 0):iy + r + 1, max(ix - r, 0):ix + r + 1].any())


def _finish(res: ExplorationResult, sem: SemanticMap, params: SegmentationParams) -> None:
    res.image = grid_to_image(res.grid)
    res.skeleton = thin_skeleton(preprocess_binary(res.image))
    res.semantic = build_semantic_map(res.image, prev=sem, params=params)


def run_exploration(
    world: WorldSpec,
    cfg: StrategyConfig | None = None,
    seed: int = 0,
    limits: Limits | None = None,
    resolution: float = 0.1,
    logodds: LogOddsParams | None = None,
    segmentation: SegmentationParams = SegmentationParams(),
    noise_sigma: float = 0.0,
) -> ExplorationResult:
    """Explore ``world`` until the target rate or a limit is reached; deterministic in ``seed``."""
    cfg = cfg or StrategyConfig()
    limits = limits or Limits()
    rng = np.random.default_rng(seed)
    grid = OccupancyGrid.for_world(world, resolution, logodds)
    geom = grid.geometry
    truth = true_free_mask(world, resolution)
    n_truth = int(truth.sum())
    first_known = np.full(geom.shape, np.inf)
    clock = SimClock(0.0, cfg.tick)
    pose = world.spawn
    state = ExplorationState(pose=pose, tree=RrtTree(pose.xy, cfg.step), rng=rng)
    state.trajectory.append((0.0, pose.x, pose.y))
    sem = SemanticMap.empty(geom.shape, geom)
    skeleton = SkeletonMap(np.zeros(geom.shape, dtype=bool))
    cloud = PointCloud3D()
    res = ExplorationResult(world, cfg, seed, resolution, [], [(0.0, pose.x, pose.y, pose.theta)], grid,
                            grid_to_image(grid), skeleton, sem, cloud, first_known, truth)
    banned: set[tuple[int, int]] = set()
    noise_rng = np.random.default_rng([seed, 1]) if noise_sigma > 0 else None

    next_semantic = 0.0
    next_skeleton = 0.0
    path: list = []
    goal: FrontierPoint | None = None
    goal_deadline = 0.0
    stall_until = -1.0
    select_at = -math.inf  # a finished goal defers the next selection by one replan stall
    idle_since: float | None = None
    travelled = 0.0

    while True:
        now = clock.now
        state.now = now
        scan = raycast_scan(world, pose, clock, noise_sigma, noise_rng)
        integrate_scan(grid, scan)
        fresh = grid.known & np.isinf(first_known)
        first_known[fresh] = now
        accumulate_points(cloud, world, pose, scan)

        if now >= next_semantic - 1e-9:
            img = grid_to_image(grid)
            start = geom.world_to_cell(pose.x, pose.y)
            sem = build_semantic_map(img, prev=sem, params=segmentation, start=start)
            next_semantic += cfg.semantic_period
        if now >= next_skeleton - 1e-9:
            skeleton = thin_skeleton(preprocess_binary(grid_to_image(grid)))
            next_skeleton += cfg.skeleton_period

        try:
            robot_region = region_of(sem, grid, pose.xy)
        except OutOfExtentError:
            robot_region = None
        state.pose = pose
        state.update_region(robot_region)

        fmask = frontier_mask(grid)
        p_s = semantic_frontier_point(grid, sem, pose, fmask) if cfg.k > 0 else None
        events = []
        for _ in range(cfg.extension_attempts):
            target = sample_point(state, cfg, world.bounds, p_s)
            res.sampling_decisions += 1
            if p_s is not None and target is p_s:
                res.sampled_semantic += 1
            ev = grow_tree_step(state, grid, target, cfg)
            if ev.kind == "frontier":
                events.append(ev.point)
        detect_frontiers(state, grid, sem, cfg, events, fmask, banned)

        explored = int((grid.known & truth).sum())
        rate = explored / n_truth if n_truth else 1.0
        res.timeline.append(TimelineRow(now, travelled, explored, rate, robot_region,
                                        goal.position if goal is not None else None))
        if rate >= limits.target_rate:
            res.status = "target"
            break
        if now >= limits.max_sim_time or travelled >= limits.max_trajectory:
            res.status = "limit"
            break

        # goal bookkeeping
        if goal is not None:
            ix, iy = geom.world_to_cell(*goal.position)
            alive = _frontier_near(fmask, ix, iy, int(round(cfg.goal_stale_radius / geom.resolution)))
            reached = not path
            timed_out = now >= goal_deadline
            if reached or not alive or timed_out:
                outcome = "reached" if reached else "stale" if not alive else "timeout"
                res.goal_outcomes[outcome] += 1
                if alive:  # arrived or gave up without resolving it: never pick it again
                    banned.add((ix, iy))
                    state.frontiers = [f for f in state.frontiers if f is not goal]
                if cfg.reset_tree and reached:
                    state.tree = RrtTree(pose.xy, cfg.step)
                goal, path = None, []
                select_at = now + cfg.replan_stall

        if goal is None and state.frontiers and now >= select_at - 1e-9:
            planner = Planner(grid, cfg.robot_radius)
            field_ = GainField(grid)
            candidates = list(state.frontiers)
            while candidates:
                try:
                    nbv = select_nbv(candidates, pose, sem, grid, cfg, field_)
                except EmptyFrontierError:
                    break
                if cfg.log_decisions:
                    res.decisions.append(Decision(
                        now, [(f.position, f.gain, f.cost, f.flag, f.score) for f in candidates], nbv.position))
                try:
                    path = planner.plan(pose.xy, nbv.position)
                except NoPathError:
                    res.goal_outcomes["unreachable"] += 1
                    banned.add(geom.world_to_cell(*nbv.position))
                    candidates = [f for f in candidates if f is not nbv]
                    state.frontiers = [f for f in state.frontiers if f is not nbv]
                    continue
                goal = nbv
                # patience counts from the expected arrival, not from selection
                goal_deadline = now + cfg.replan_stall + path_length(path) / cfg.speed + cfg.goal_patience
                # the stall is spent before choosing, letting the tree grow from the new root
                stall_until = now if select_at > -math.inf else now + cfg.replan_stall
                res.replans += 1
                break

        if goal is None:
            idle_since = now if idle_since is None else idle_since
            if now - idle_since >= cfg.stall_timeout:
                res.status = "stall"
                _finish(res, sem, segmentation)
                raise StallError(f"no reachable frontier for {cfg.stall_timeout:.1f} s at rate {rate:.3f}", res)
        else:
            idle_since = None

        if path and now >= stall_until - 1e-9:
            adv = advance_along_path(world, pose, path, clock, cfg.speed)
            run = 0.0
            prev_xy = pose.xy
            for q in adv.passed:
                run += math.hypot(q[0] - prev_xy[0], q[1] - prev_xy[1])
                res.trajectory.append((now + run / cfg.speed, q[0], q[1], adv.pose.theta))
                prev_xy = q
            pose = adv.pose
            path = adv.remaining
            travelled += adv.distance
        clock.step()

    res.grid = grid
    _finish(res, sem, segmentation)
    return res
