"""Simulated environment: walls, rooms, lidar raycasting and point-robot motion."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
import shapely
from shapely.geometry import Polygon

from .errors import CollisionError, WorldParseError, WorldValidationError
from .grid import GridGeometry

TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.remainder(theta, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    return a


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Wall:
    """A thick segment; the footprint is the rectangle swept along the segment (flat caps)."""

    x1: float
    y1: float
    x2: float
    y2: float
    thickness: float

    @property
    def length(self) -> float:
        return math.hypot(self.x2 - self.x1, self.y2 - self.y1)

    def _frame(self):
        length = self.length
        ux, uy = (self.x2 - self.x1) / length, (self.y2 - self.y1) / length
        return length, ux, uy, -uy, ux

    def corners(self) -> np.ndarray:
        _, ux, uy, nx, ny = self._frame()
        h = 0.5 * self.thickness
        return np.array([
            (self.x1 + nx * h, self.y1 + ny * h),
            (self.x2 + nx * h, self.y2 + ny * h),
            (self.x2 - nx * h, self.y2 - ny * h),
            (self.x1 - nx * h, self.y1 - ny * h),
        ])

    def contains(self, xs, ys, shrink: float = 0.0):
        """Closed point-in-footprint test, vectorised over ``xs, ys``."""
        length, ux, uy, nx, ny = self._frame()
        dx = np.asarray(xs, dtype=float) - self.x1
        dy = np.asarray(ys, dtype=float) - self.y1
        along = dx * ux + dy * uy
        across = dx * nx + dy * ny
        h = 0.5 * self.thickness - shrink
        return (along >= shrink) & (along <= length - shrink) & (np.abs(across) <= h)

    def segment_hits(self, p, q, shrink: float = 0.0) -> bool:
        """Whether segment p->q touches the (optionally shrunk) footprint (slab clipping)."""
        length, ux, uy, nx, ny = self._frame()
        h = 0.5 * self.thickness - shrink
        lo = (shrink, -h)
        hi = (length - shrink, h)
        if hi[0] < lo[0] or h < 0:
            return False
        p0 = ((p[0] - self.x1) * ux + (p[1] - self.y1) * uy, (p[0] - self.x1) * nx + (p[1] - self.y1) * ny)
        d = ((q[0] - p[0]) * ux + (q[1] - p[1]) * uy, (q[0] - p[0]) * nx + (q[1] - p[1]) * ny)
        t0, t1 = 0.0, 1.0
        for k in range(2):
            if abs(d[k]) < 1e-15:
                if p0[k] < lo[k] or p0[k] > hi[k]:
                    return False
                continue
            a = (lo[k] - p0[k]) / d[k]
            b = (hi[k] - p0[k]) / d[k]
            if a > b:
                a, b = b, a
            t0, t1 = max(t0, a), min(t1, b)
            if t0 > t1:
                return False
        return True


@dataclass(frozen=True)
class Room:
    label: str
    polygon: tuple[tuple[float, float], ...]

    @cached_property
    def shape(self) -> Polygon:
        return Polygon(self.polygon)


@dataclass(frozen=True)
class LidarSpec:
    range_max: float = 6.0
    beam_count: int = 360
    angular_span: float = TWO_PI

    def bearings(self) -> np.ndarray:
        """Beam bearings relative to the robot heading."""
        if self.angular_span >= TWO_PI - 1e-9:
            return -math.pi + np.arange(self.beam_count) * (TWO_PI / self.beam_count)
        if self.beam_count == 1:
            return np.zeros(1)
        return np.linspace(-0.5 * self.angular_span, 0.5 * self.angular_span, self.beam_count)


@dataclass
class WorldSpec:
    name: str
    bounds: tuple[float, float, float, float]
    walls: list[Wall]
    rooms: list[Room]
    spawn: Pose
    lidar: LidarSpec = field(default_factory=LidarSpec)

    @cached_property
    def _edges(self) -> tuple[np.ndarray, np.ndarray]:
        starts, vecs = [], []
        for wall in self.walls:
            c = wall.corners()
            for k in range(4):
                a, b = c[k], c[(k + 1) % 4]
                starts.append(a)
                vecs.append(b - a)
        if not starts:
            return np.zeros((0, 2)), np.zeros((0, 2))
        return np.array(starts), np.array(vecs)

    def in_collision(self, x: float, y: float) -> bool:
        return any(bool(w.contains(x, y)) for w in self.walls)

    def validate(self, resolution: float = 0.1) -> "WorldSpec":
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < xmax and ymin < ymax):
            raise WorldValidationError("bounds", f"degenerate rectangle {self.bounds}")
        for i, w in enumerate(self.walls):
            if w.length <= 0:
                raise WorldValidationError(f"walls[{i}]", "zero-length wall")
            if w.thickness < 2 * resolution - 1e-12:
                raise WorldValidationError(
                    f"walls[{i}]",
                    f"thickness {w.thickness} < 2x grid resolution {resolution} (leaky wall)",
                )
        shapes = []
        for i, room in enumerate(self.rooms):
            if len(room.polygon) < 3:
                raise WorldValidationError(f"rooms[{i}]", "polygon needs at least 3 vertices")
            if not room.shape.is_valid or room.shape.area <= 0:
                raise WorldValidationError(f"rooms[{i}]", "polygon is self-intersecting or empty")
            shapes.append(room.shape)
        for i in range(len(shapes)):
            for j in range(i + 1, len(shapes)):
                if shapes[i].intersection(shapes[j]).area > 1e-9:
                    raise WorldValidationError(f"rooms[{j}]", f"interior overlaps rooms[{i}]")
        s = self.spawn
        if not (xmin < s.x < xmax and ymin < s.y < ymax):
            raise WorldValidationError("spawn", "not strictly inside bounds")
        for i, w in enumerate(self.walls):
            if w.contains(s.x, s.y):
                raise WorldValidationError("spawn", f"inside the footprint of walls[{i}]")
        lid = self.lidar
        if lid.range_max <= 0 or lid.beam_count < 1 or not (0 < lid.angular_span <= TWO_PI + 1e-9):
            raise WorldValidationError("lidar", "range_max > 0, beam_count >= 1, 0 < angular_span <= 2pi")
        return self

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "bounds": list(self.bounds),
            "walls": [[w.x1, w.y1, w.x2, w.y2, w.thickness] for w in self.walls],
            "rooms": [{"label": r.label, "polygon": [list(p) for p in r.polygon]} for r in self.rooms],
            "spawn": [self.spawn.x, self.spawn.y, self.spawn.theta],
            "lidar": {
                "range_max": self.lidar.range_max,
                "beam_count": self.lidar.beam_count,
                "angular_span": self.lidar.angular_span,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WorldSpec":
        try:
            name = str(data["name"])
            bounds = tuple(float(v) for v in data["bounds"])
            if len(bounds) != 4:
                raise WorldParseError("bounds must have 4 numbers")
            walls = []
            for i, w in enumerate(data["walls"]):
                if len(w) != 5:
                    raise WorldParseError(f"walls[{i}] must be [x1,y1,x2,y2,thickness]")
                walls.append(Wall(*(float(v) for v in w)))
            rooms = []
            for i, r in enumerate(data.get("rooms", [])):
                poly = tuple((float(p[0]), float(p[1])) for p in r["polygon"])
                rooms.append(Room(str(r.get("label", f"room{i}")), poly))
            sx, sy, st = (float(v) for v in data["spawn"])
            lid = data.get("lidar", {})
            lidar = LidarSpec(
                float(lid.get("range_max", LidarSpec.range_max)),
                int(lid.get("beam_count", LidarSpec.beam_count)),
                float(lid.get("angular_span", LidarSpec.angular_span)),
            )
        except WorldParseError:
            raise
        except KeyError as exc:
            raise WorldParseError(f"missing key {exc.args[0]!r}") from exc
        except (TypeError, ValueError, IndexError) as exc:
            raise WorldParseError(f"malformed value: {exc}") from exc
        return cls(name, bounds, walls, rooms, Pose(sx, sy, st), lidar)


def load_world(path, resolution: float = 0.1) -> WorldSpec:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise WorldParseError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise WorldParseError(f"{path}: top level must be an object")
    return WorldSpec.from_dict(data).validate(resolution)


def save_world(world: WorldSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(world.to_dict(), fh, indent=1)
        fh.write("\n")


@dataclass
class SimClock:
    now: float = 0.0
    tick: float = 0.5

    def __post_init__(self):
        if self.tick <= 0:
            raise ValueError("tick must be positive")

    def step(self, n: int = 1) -> float:
        self.now += n * self.tick
        return self.now


@dataclass
class LidarScan:
    origin: Pose
    bearings: np.ndarray
    ranges: np.ndarray
    timestamp: float
    range_max: float

    @property
    def hits(self) -> np.ndarray:
        return self.ranges < self.range_max


def raycast_scan(world: WorldSpec, pose: Pose, clock: SimClock, noise_sigma: float = 0.0, rng=None) -> LidarScan:
    """First-hit ranges against the exact wall rectangles, clamped to ``range_max``."""
    if world.in_collision(pose.x, pose.y):
        raise CollisionError(f"scan pose ({pose.x:.3f}, {pose.y:.3f}) is inside a wall")
    lidar = world.lidar
    bearings = lidar.bearings()
    angles = pose.theta + bearings
    dx, dy = np.cos(angles)[:, None], np.sin(angles)[:, None]
    starts, vecs = world._edges
    ranges = np.full(len(bearings), lidar.range_max)
    if len(starts):
        ex, ey = vecs[:, 0][None, :], vecs[:, 1][None, :]
        wx, wy = starts[:, 0][None, :] - pose.x, starts[:, 1][None, :] - pose.y
        denom = dx * ey - dy * ex
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (wx * ey - wy * ex) / denom
            s = (wx * dy - wy * dx) / denom
        ok = (np.abs(denom) > 1e-12) & (t > 0) & (s >= 0) & (s <= 1)
        t = np.where(ok, t, np.inf)
        ranges = np.minimum(t.min(axis=1), lidar.range_max)
    if noise_sigma > 0:
        rng = rng if rng is not None else np.random.default_rng()
        noisy = ranges + rng.normal(0.0, noise_sigma, size=ranges.shape)
        ranges = np.where(ranges < lidar.range_max, np.clip(noisy, 1e-6, lidar.range_max), ranges)
    return LidarScan(pose, bearings, ranges, clock.now, lidar.range_max)


class Advance(NamedTuple):
    pose: Pose
    distance: float
    remaining: list  # waypoints still ahead, starting with the new position
    passed: list  # polyline vertices crossed this tick, excluding the start, ending at the new position


def advance_along_path(
    world: WorldSpec,
    pose: Pose,
    path: Sequence[tuple[float, float]],
    clock: SimClock,
    speed: float = 0.5,
    abort: bool = False,
    tolerance: float = 0.05,
) -> Advance:
    """Move a point robot along ``path`` for one clock tick at constant speed.

    ``tolerance`` shrinks wall footprints for the collision check, absorbing the
    sub-cell clipping that grid-planned paths can make against wall corners.
    """
    if abort or not path:
        return Advance(pose, 0.0, list(path), [])
    budget = speed * clock.tick
    pts = [(pose.x, pose.y)] + [tuple(map(float, p)) for p in path]
    cur = pts[0]
    theta = pose.theta
    travelled = 0.0
    passed = []
    i = 1
    while i < len(pts) and budget > 0:
        nxt = pts[i]
        seg = math.hypot(nxt[0] - cur[0], nxt[1] - cur[1])
        if seg <= 1e-12:
            i += 1
            continue
        step = min(seg, budget)
        frac = step / seg
        end = nxt if step == seg else (cur[0] + (nxt[0] - cur[0]) * frac, cur[1] + (nxt[1] - cur[1]) * frac)
        for k, wall in enumerate(world.walls):
            if wall.segment_hits(cur, end, shrink=tolerance):
                raise CollisionError(f"path segment {cur}->{end} crosses walls[{k}]")
        theta = math.atan2(nxt[1] - cur[1], nxt[0] - cur[0])
        travelled += step
        budget -= step
        cur = end
        passed.append(cur)
        if step == seg:
            i += 1
    remaining = [cur] + pts[i:] if i < len(pts) else []
    return Advance(Pose(cur[0], cur[1], theta), travelled, remaining, passed)


def true_free_mask(world: WorldSpec, resolution: float) -> np.ndarray:
    """Cells whose centre lies inside bounds and outside every wall footprint."""
    geom = GridGeometry.covering(world.bounds, resolution)
    xs, ys = geom.cell_centers()
    xmin, ymin, xmax, ymax = world.bounds
    free = (xs >= xmin) & (xs <= xmax) & (ys >= ymin) & (ys <= ymax)
    for wall in world.walls:
        free &= ~wall.contains(xs, ys)
    return free


def room_masks(world: WorldSpec, resolution: float) -> list[np.ndarray]:
    """Per-room boolean masks of cell centres inside each room polygon."""
    geom = GridGeometry.covering(world.bounds, resolution)
    xs, ys = geom.cell_centers()
    return [shapely.contains_xy(room.shape, xs, ys) for room in world.rooms]
