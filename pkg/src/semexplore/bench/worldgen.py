"""Seeded rectilinear floor plans: recursive rectangular partition with doors."""
from __future__ import annotations

import math

import numpy as np

from ..world import LidarSpec, Pose, Room, Wall, WorldSpec

WALL_THICKNESS = 0.2  # with 0.1 m snapping, wall faces fall on 0.1 m cell boundaries
SIZE_CLASSES = {
    # (width, height, min rooms, max rooms)
    "small": (14.0, 14.0, 4, 6),
    "medium": (21.0, 22.0, 6, 10),
    "large": (34.0, 34.0, 12, 18),
}
MIN_SIDE = 3.0
DOOR_MIN, DOOR_MAX = 0.9, 1.1
JAMB_MIN = 0.6  # clearance between a door and the end of the shared wall
JAMB_LONG = 1.3  # at least one side keeps a wall run long enough to close the doorway
EXTRA_DOOR_P = 0.5
DEFAULT_LIDAR = LidarSpec(range_max=6.0, beam_count=360, angular_span=2 * math.pi)


def _snap(v: float) -> float:
    return round(v * 10.0) / 10.0


def _partition(rng, rect, n_rooms):
    rooms = [rect]
    while len(rooms) < n_rooms:
        order = sorted(range(len(rooms)), key=lambda i: -((rooms[i][2] - rooms[i][0]) * (rooms[i][3] - rooms[i][1])))
        for i in order:
            x0, y0, x1, y1 = rooms[i]
            w, h = x1 - x0, y1 - y0
            vertical = w >= h
            span = w if vertical else h
            if span < 2 * MIN_SIDE:
                continue
            lo = max(0.35, MIN_SIDE / span)
            hi = min(0.65, 1 - MIN_SIDE / span)
            base = x0 if vertical else y0
            cut = _snap(base + span * rng.uniform(lo, hi))
            cut = min(max(cut, base + MIN_SIDE), base + span - MIN_SIDE)
            if vertical:
                a, b = (x0, y0, cut, y1), (cut, y0, x1, y1)
            else:
                a, b = (x0, y0, x1, cut), (x0, cut, x1, y1)
            rooms[i:i + 1] = [a, b]
            break
        else:
            break
    return rooms


def _shared_edges(rooms):
    """(i, j, axis, coord, lo, hi) for every pair of rooms sharing a wall stretch."""
    out = []
    eps = 1e-6
    for i in range(len(rooms)):
        for j in range(i + 1, len(rooms)):
            a, b = rooms[i], rooms[j]
            for axis in ("x", "y"):
                if axis == "x":
                    touch = [c for c in (a[0], a[2]) if abs(c - b[0]) < eps or abs(c - b[2]) < eps]
                    lo, hi = max(a[1], b[1]), min(a[3], b[3])
                else:
                    touch = [c for c in (a[1], a[3]) if abs(c - b[1]) < eps or abs(c - b[3]) < eps]
                    lo, hi = max(a[0], b[0]), min(a[2], b[2])
                for c in touch:
                    # rooms must lie on opposite sides of the line
                    if axis == "x" and not ((abs(a[2] - c) < eps and abs(b[0] - c) < eps) or (abs(a[0] - c) < eps and abs(b[2] - c) < eps)):
                        continue
                    if axis == "y" and not ((abs(a[3] - c) < eps and abs(b[1] - c) < eps) or (abs(a[1] - c) < eps and abs(b[3] - c) < eps)):
                        continue
                    if hi - lo > eps:
                        out.append((i, j, axis, c, lo, hi))
    return out


def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def _choose_doors(rng, n, edges):
    eligible = [e for e in edges if e[5] - e[4] >= DOOR_MAX + JAMB_MIN + JAMB_LONG]
    order = rng.permutation(len(eligible))
    parent = list(range(n))
    chosen, rest = [], []
    for k in order:
        e = eligible[k]
        ri, rj = _find(parent, e[0]), _find(parent, e[1])
        if ri != rj:
            parent[ri] = rj
            chosen.append(e)
        else:
            rest.append(e)
    if len({_find(parent, i) for i in range(n)}) > 1:
        return None
    chosen += [e for e in rest if rng.random() < EXTRA_DOOR_P]
    doors = []
    for _, _, axis, c, lo, hi in sorted(chosen, key=lambda e: (e[0], e[1], e[2])):
        width = _snap(rng.uniform(DOOR_MIN, DOOR_MAX))
        if rng.random() < 0.5:
            start = rng.uniform(lo + JAMB_MIN, hi - width - JAMB_LONG)
        else:
            start = rng.uniform(lo + JAMB_LONG, hi - width - JAMB_MIN)
        start = _snap(start)
        doors.append((axis, c, start, _snap(start + width)))
    return doors


def _wall_lines(bounds, rooms):
    """Distinct wall centre-lines as (axis, coord, lo, hi), merged where collinear and touching."""
    xmin, ymin, xmax, ymax = bounds
    h = 0.5 * WALL_THICKNESS
    lines = [("y", ymin + h, xmin, xmax), ("y", ymax - h, xmin, xmax),
             ("x", xmin + h, ymin, ymax), ("x", xmax - h, ymin, ymax)]
    border = {("y", round(ymin + h, 6)), ("y", round(ymax - h, 6)), ("x", round(xmin + h, 6)), ("x", round(xmax - h, 6))}
    spans = {}
    for x0, y0, x1, y1 in rooms:
        for axis, c, lo, hi in (("x", x0, y0, y1), ("x", x1, y0, y1), ("y", y0, x0, x1), ("y", y1, x0, x1)):
            key = (axis, round(c, 6))
            if key in border:
                continue
            spans.setdefault(key, []).append((lo, hi))
    for (axis, c), parts in sorted(spans.items()):
        parts.sort()
        cur_lo, cur_hi = parts[0]
        for lo, hi in parts[1:]:
            if lo <= cur_hi + 1e-6:
                cur_hi = max(cur_hi, hi)
            else:
                lines.append((axis, c, cur_lo, cur_hi))
                cur_lo, cur_hi = lo, hi
        lines.append((axis, c, cur_lo, cur_hi))
    return lines


def _cut_doors(lines, doors):
    walls = []
    for axis, c, lo, hi in lines:
        gaps = sorted((a, b) for ax, cc, a, b in doors if ax == axis and abs(cc - c) < 1e-6 and a >= lo - 1e-6 and b <= hi + 1e-6)
        pieces = []
        cur = lo
        for a, b in gaps:
            if a > cur:
                pieces.append((cur, a))
            cur = max(cur, b)
        if hi > cur:
            pieces.append((cur, hi))
        for a, b in pieces:
            if b - a < 1e-6:
                continue
            if axis == "x":
                walls.append(Wall(c, a, c, b, WALL_THICKNESS))
            else:
                walls.append(Wall(a, c, b, c, WALL_THICKNESS))
    return walls


def generate_world(seed: int, size_class: str = "medium", lidar: LidarSpec = DEFAULT_LIDAR) -> WorldSpec:
    """Deterministic floor plan for ``seed``; every room is reachable through doors."""
    if size_class not in SIZE_CLASSES:
        raise ValueError(f"size_class must be one of {sorted(SIZE_CLASSES)}")
    width, height, n_lo, n_hi = SIZE_CLASSES[size_class]
    bounds = (0.0, 0.0, width, height)
    h = 0.5 * WALL_THICKNESS
    inner = (h, h, width - h, height - h)
    for attempt in range(100):
        rng = np.random.default_rng([seed, attempt, list(SIZE_CLASSES).index(size_class)])
        n_rooms = int(rng.integers(n_lo, n_hi + 1))
        rooms = _partition(rng, inner, n_rooms)
        if len(rooms) < n_lo:
            continue
        doors = _choose_doors(rng, len(rooms), _shared_edges(rooms))
        if doors is None:
            continue
        walls = _cut_doors(_wall_lines(bounds, rooms), doors)
        spawn_room = rooms[int(rng.integers(len(rooms)))]
        spawn = Pose(0.5 * (spawn_room[0] + spawn_room[2]), 0.5 * (spawn_room[1] + spawn_room[3]), 0.0)
        room_polys = [
            Room(f"room{i}", ((x0, y0), (x1, y0), (x1, y1), (x0, y1)))
            for i, (x0, y0, x1, y1) in enumerate(rooms)
        ]
        return WorldSpec(f"{size_class}-{seed}", bounds, walls, room_polys, spawn, lidar).validate()
    raise RuntimeError(f"could not generate a connected {size_class} world for seed {seed}")
