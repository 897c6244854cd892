"""Occupancy grid, image map, synthetic 3D cloud and the map file writers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .grid import GridGeometry
from .world import LidarScan, Pose, WorldSpec


class Cell(IntEnum):
    UNKNOWN = 0
    FREE = 1
    OCCUPIED = 2


# pixel bytes follow the map_server PGM convention
GREY = 205
WHITE = 254
BLACK = 0
PIXEL_OF = np.array([GREY, WHITE, BLACK], dtype=np.uint8)  # indexed by Cell


@dataclass(frozen=True)
class LogOddsParams:
    hit: float = 0.85
    miss: float = -0.4
    clamp: float = 3.5
    occupied_above: float = 0.5
    free_below: float = -0.5


@dataclass
class OccupancyGrid:
    geometry: GridGeometry
    params: LogOddsParams = field(default_factory=LogOddsParams)
    logodds: np.ndarray = None
    state: np.ndarray = None

    def __post_init__(self):
        if self.logodds is None:
            self.logodds = np.zeros(self.geometry.shape)
        if self.state is None:
            self.state = np.full(self.geometry.shape, Cell.UNKNOWN, dtype=np.int8)

    @classmethod
    def for_world(cls, world: WorldSpec, resolution: float = 0.1, params: LogOddsParams | None = None):
        return cls(GridGeometry.covering(world.bounds, resolution), params or LogOddsParams())

    @classmethod
    def from_states(cls, states, resolution: float = 0.1, origin=(0.05, 0.05)) -> "OccupancyGrid":
        """Build a grid directly from a ``(height, width)`` array of :class:`Cell` values."""
        st = np.asarray(states, dtype=np.int8)
        geom = GridGeometry(st.shape[1], st.shape[0], resolution, tuple(origin))
        grid = cls(geom)
        grid.state = st.copy()
        grid.logodds = np.where(st == Cell.OCCUPIED, grid.params.hit, np.where(st == Cell.FREE, grid.params.miss, 0.0))
        return grid

    @property
    def width(self) -> int:
        return self.geometry.width

    @property
    def height(self) -> int:
        return self.geometry.height

    @property
    def resolution(self) -> float:
        return self.geometry.resolution

    @property
    def known(self) -> np.ndarray:
        return self.state != Cell.UNKNOWN

    def cell_state(self, x: float, y: float) -> Cell:
        ix, iy = self.geometry.world_to_cell(x, y)
        return Cell(int(self.state[iy, ix]))

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.geometry, self.params, self.logodds.copy(), self.state.copy())


def ray_cells(geom: GridGeometry, x0: float, y0: float, x1, y1):
    """Cells crossed by the segments ``(x0,y0)->(x1[i],y1[i])`` in order, endpoints included.

    Exact grid traversal on the real-valued endpoints.  Where a segment passes
    exactly through a cell corner it steps diagonally and skips the two cells
    it only touches.  Returns ``(ray_id, xs, ys, is_end)`` flattened over rays.
    """
    res = geom.resolution
    u0 = (x0 - geom.origin[0]) / res + 0.5
    v0 = (y0 - geom.origin[1]) / res + 0.5
    u1 = (np.asarray(x1, dtype=float) - geom.origin[0]) / res + 0.5
    v1 = (np.asarray(y1, dtype=float) - geom.origin[1]) / res + 0.5
    n = len(u1)
    ix0, iy0 = math.floor(u0), math.floor(v0)
    ix1, iy1 = np.floor(u1).astype(np.int64), np.floor(v1).astype(np.int64)
    du, dv = u1 - u0, v1 - v0

    def crossings(i0, i1, c0, d):
        cnt = np.abs(i1 - i0)
        rid = np.repeat(np.arange(n), cnt)
        k = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        sgn = np.sign(i1 - i0)[rid]
        bound = np.where(sgn > 0, i0 + 1 + k, i0 - k)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (bound - c0) / d[rid]
        return rid, t, sgn

    rx, tx, sx = crossings(ix0, ix1, u0, du)
    ry, ty, sy = crossings(iy0, iy1, v0, dv)
    rid = np.concatenate([rx, ry])
    t = np.concatenate([tx, ty])
    stepx = np.concatenate([sx, np.zeros_like(sy)])
    stepy = np.concatenate([np.zeros_like(sx), sy])
    order = np.lexsort((t, rid))
    rid, t, stepx, stepy = rid[order], t[order], stepx[order], stepy[order]
    # a corner crossing is an x and a y crossing at the same parameter: keep one combined step
    tie = np.zeros(len(t), dtype=bool)
    if len(t) > 1:
        tie[:-1] = (rid[:-1] == rid[1:]) & (np.abs(t[:-1] - t[1:]) < 1e-9)
    stepx[1:][tie[:-1]] += stepx[:-1][tie[:-1]]
    stepy[1:][tie[:-1]] += stepy[:-1][tie[:-1]]
    keep = ~tie
    rid, stepx, stepy = rid[keep], stepx[keep], stepy[keep]

    counts = np.bincount(rid, minlength=n) + 1  # crossings plus the start cell
    ray_id = np.repeat(np.arange(n), counts)
    starts = np.cumsum(counts) - counts
    dx = np.zeros(len(ray_id), dtype=np.int64)
    dy = np.zeros(len(ray_id), dtype=np.int64)
    slot = np.ones(len(ray_id), dtype=bool)
    slot[starts] = False
    dx[slot] = stepx
    dy[slot] = stepy
    cx = np.cumsum(dx)
    cy = np.cumsum(dy)
    base_x = np.repeat(cx[starts], counts)
    base_y = np.repeat(cy[starts], counts)
    xs = ix0 + cx - base_x
    ys = iy0 + cy - base_y
    is_end = np.zeros(len(ray_id), dtype=bool)
    is_end[starts + counts - 1] = True
    return ray_id, xs, ys, is_end


def integrate_scan(grid: OccupancyGrid, scan: LidarScan) -> OccupancyGrid:
    """Carve free space along every beam and mark hit endpoints (in place).

    Beams are walked with exact grid traversal, so a beam never enters a cell
    it does not physically cross (integer Bresenham would clip wall corners at
    grazing incidence).

    Each cell is updated at most once per scan; a cell that is a hit endpoint
    for any beam takes the hit update only.  A cell leaving Unknown takes the
    sign of its log-odds; afterwards it flips class only across the
    occupied/free thresholds, so knowledge never reverts.
    """
    geom, p = grid.geometry, grid.params
    o = scan.origin
    angles = o.theta + scan.bearings
    hit = scan.hits
    # nudge hit points past the wall face so they land in the struck cell
    r = scan.ranges + np.where(hit, 1e-6, 0.0)
    ex = o.x + r * np.cos(angles)
    ey = o.y + r * np.sin(angles)
    line_id, xs, ys, is_end = ray_cells(geom, o.x, o.y, ex, ey)
    inside = (xs >= 0) & (xs < geom.width) & (ys >= 0) & (ys < geom.height)
    flat = ys * geom.width + xs
    hit_cell = is_end & hit[line_id]

    hits = np.zeros(geom.width * geom.height, dtype=bool)
    hits[flat[inside & hit_cell]] = True
    misses = np.zeros_like(hits)
    misses[flat[inside & ~hit_cell]] = True
    misses &= ~hits
    hits = hits.reshape(geom.shape)
    misses = misses.reshape(geom.shape)

    lo = grid.logodds
    lo[hits] += p.hit
    lo[misses] += p.miss
    np.clip(lo, -p.clamp, p.clamp, out=lo)

    touched = hits | misses
    st = grid.state
    first = touched & (st == Cell.UNKNOWN)
    st[first] = np.where(lo[first] > 0, Cell.OCCUPIED, Cell.FREE)
    st[touched & (lo > p.occupied_above)] = Cell.OCCUPIED
    st[touched & (lo < p.free_below)] = Cell.FREE
    return grid


@dataclass
class ImageMap:
    pixels: np.ndarray  # (height, width) uint8, row 0 = minimum y
    geometry: GridGeometry | None = None

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def grid_to_image(grid: OccupancyGrid) -> ImageMap:
    """Unknown -> grey, free -> white, occupied -> black, cell for cell."""
    return ImageMap(PIXEL_OF[grid.state], grid.geometry)


def image_to_states(pixels) -> np.ndarray:
    """Inverse of the image classes; any other byte is read with map_server-style thresholds."""
    px = np.asarray(pixels)
    occ = (255 - px.astype(np.int32)) / 255.0
    states = np.full(px.shape, Cell.UNKNOWN, dtype=np.int8)
    states[occ > 0.65] = Cell.OCCUPIED
    states[occ < 0.196] = Cell.FREE
    states[px == GREY] = Cell.UNKNOWN
    return states


@dataclass
class PointCloud3D:
    voxel_size: float = 0.1
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    _keys: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64), repr=False)  # sorted

    def __len__(self) -> int:
        return len(self.points)

    def _voxel_keys(self, pts: np.ndarray) -> np.ndarray:
        v = np.floor(pts / self.voxel_size).astype(np.int64) + (1 << 20)
        return (v[:, 0] << 42) | (v[:, 1] << 21) | v[:, 2]

    def insert(self, pts) -> int:
        """Add points whose voxel is not yet occupied; returns the number kept.

        Coordinates are rounded to 6 decimals so the XYZ export round-trips exactly.
        """
        pts = np.round(np.asarray(pts, dtype=float).reshape(-1, 3), 6)
        if not len(pts):
            return 0
        keys = self._voxel_keys(pts)
        uniq, first = np.unique(keys, return_index=True)
        pos = np.searchsorted(self._keys, uniq)
        seen = (pos < len(self._keys)) & (self._keys[np.minimum(pos, len(self._keys) - 1)] == uniq) if len(self._keys) else np.zeros(len(uniq), bool)
        new_keys = uniq[~seen]
        if not len(new_keys):
            return 0
        keep = np.sort(first[~seen])  # first occurrence order within the batch
        self.points = np.vstack([self.points, pts[keep]])
        self._keys = np.union1d(self._keys, new_keys)
        return len(keep)


def accumulate_points(
    cloud: PointCloud3D,
    world: WorldSpec,
    pose: Pose,
    scan: LidarScan,
    heights: int = 8,
    wall_height: float = 2.0,
) -> PointCloud3D:
    """Extrude every hit beam into ``heights`` points between floor and wall top (in place)."""
    hit = scan.hits
    if not hit.any():
        return cloud
    a = pose.theta + scan.bearings[hit]
    r = scan.ranges[hit]
    x = pose.x + r * np.cos(a)
    y = pose.y + r * np.sin(a)
    xmin, ymin, xmax, ymax = world.bounds
    pad = world.lidar.range_max
    ok = (x >= xmin - pad) & (x <= xmax + pad) & (y >= ymin - pad) & (y <= ymax + pad)
    x, y = x[ok], y[ok]
    zs = np.linspace(0.0, wall_height, heights)
    pts = np.column_stack([np.repeat(x, heights), np.repeat(y, heights), np.tile(zs, len(x))])
    cloud.insert(pts)
    return cloud


def pgm_bytes(pixels: np.ndarray) -> bytes:
    """Binary P5 graymap, row 0 of the file = maximum-y row of the array."""
    px = np.asarray(pixels, dtype=np.uint8)
    h, w = px.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(px[::-1]).tobytes()


def export_pgm(img: ImageMap, path) -> None:
    with open(path, "wb") as fh:
        fh.write(pgm_bytes(img.pixels))


def read_pgm(path) -> np.ndarray:
    """Parse a binary P5 file into an array with row 0 = minimum y."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PGM not supported")
    pos += 1  # single whitespace after maxval
    raw = np.frombuffer(data[pos:pos + w * h], dtype=np.uint8)
    if raw.size != w * h:
        raise ValueError(f"{path}: expected {w * h} pixel bytes, got {raw.size}")
    return raw.reshape(h, w)[::-1].copy()


def write_map_yaml(path, image_name: str, geometry: GridGeometry) -> None:
    """map_server-style metadata; origin is the world position of the lower-left cell corner."""
    half = 0.5 * geometry.resolution
    ox, oy = geometry.origin[0] - half, geometry.origin[1] - half
    with open(path, "w", newline="\n") as fh:
        fh.write(
            f"image: {image_name}\nresolution: {geometry.resolution:.6f}\n"
            f"origin: [{ox:.6f}, {oy:.6f}, 0.000000]\nnegate: 0\n"
            "occupied_thresh: 0.65\nfree_thresh: 0.196\n"
        )


def export_xyz(cloud: PointCloud3D, path) -> None:
    pts = cloud.points
    if len(pts):
        pts = pts[np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))]
    with open(path, "w", newline="\n") as fh:
        fh.writelines(f"{x:.6f} {y:.6f} {z:.6f}\n" for x, y, z in pts)


def read_xyz(path) -> np.ndarray:
    with open(path) as fh:
        rows = [tuple(float(v) for v in line.split()) for line in fh if line.strip()]
    return np.array(rows, dtype=float).reshape(-1, 3)


def fraction_known(grid: OccupancyGrid, mask: np.ndarray) -> float:
    total = int(mask.sum())
    return float((grid.known & mask).sum()) / total if total else 1.0



def rasterize_world(world: WorldSpec, resolution: float = 0.1) -> OccupancyGrid:
    """Fully explored map of ``world``: wall cells occupied, every other in-bounds cell free."""
    grid = OccupancyGrid.for_world(world, resolution)
    xs, ys = grid.geometry.cell_centers()
    wall = np.zeros(grid.geometry.shape, dtype=bool)
    for w in world.walls:
        wall |= w.contains(xs, ys)
    xmin, ymin, xmax, ymax = world.bounds
    inside = (xs >= xmin) & (xs <= xmax) & (ys >= ymin) & (ys <= ymax)
    grid.state[inside] = Cell.FREE
    grid.state[wall] = Cell.OCCUPIED
    p = grid.params
    grid.logodds = np.where(grid.state == Cell.OCCUPIED, p.clamp, np.where(grid.state == Cell.FREE, -p.clamp, 0.0))
    return grid
