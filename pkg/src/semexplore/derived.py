"""Topological skeleton and semantic region map built from the image map.

All rasters here share the occupancy grid's indexing: ``[row, col]`` with
row 0 at minimum y.
"""
from __future__ import annotations

import colorsys
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import OutOfExtentError
from .grid import GridGeometry
from .mapping import BLACK, GREY, WHITE, ImageMap, OccupancyGrid, pgm_bytes

log = logging.getLogger(__name__)

CROSS = ndimage.generate_binary_structure(2, 1)
SQUARE = np.ones((3, 3), dtype=bool)


def preprocess_binary(img: ImageMap) -> np.ndarray:
    """Binarize (white -> True) and apply one 3x3 morphological opening."""
    mask = img.pixels == WHITE
    return ndimage.binary_opening(mask, structure=SQUARE)


@dataclass
class SkeletonMap:
    skeleton: np.ndarray  # bool (height, width)

    @property
    def width(self) -> int:
        return self.skeleton.shape[1]

    @property
    def height(self) -> int:
        return self.skeleton.shape[0]


def _neighbours(p: np.ndarray):
    """P2..P9 of the 3x3 window, clockwise from north, for every pixel of a zero-padded array."""
    c = p[1:-1, 1:-1]
    return (
        p[:-2, 1:-1], p[:-2, 2:], p[1:-1, 2:], p[2:, 2:],
        p[2:, 1:-1], p[2:, :-2], p[1:-1, :-2], p[:-2, :-2],
    ), c


def _zs_candidates(p: np.ndarray, first: bool) -> np.ndarray:
    (p2, p3, p4, p5, p6, p7, p8, p9), c = _neighbours(p)
    ring = (p2, p3, p4, p5, p6, p7, p8, p9, p2)
    b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9
    a = sum(((ring[i] == 0) & (ring[i + 1] == 1)).astype(np.uint8) for i in range(8))
    if first:
        side = (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
    else:
        side = (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
    return (c == 1) & (b >= 2) & (b <= 6) & (a == 1) & side


def thin_skeleton(mask: np.ndarray, max_iter: int = 10_000) -> SkeletonMap:
    """Zhang-Suen two-subpass thinning to a fixpoint, then removal of leftover 2x2 corners."""
    p = np.pad(np.asarray(mask, dtype=bool), 1).astype(np.uint8)
    inner = p[1:-1, 1:-1]
    for _ in range(max_iter):
        changed = False
        for first in (True, False):
            kill = _zs_candidates(p, first)
            if kill.any():
                inner[kill] = 0
                changed = True
        if not changed:
            break
    _remove_staircases(p)
    return SkeletonMap(inner.astype(bool).copy())


def _remove_staircases(p: np.ndarray) -> None:
    """Sequentially drop simple, non-end pixels of any all-set 2x2 block (in place).

    Zhang-Suen can leave such blocks on diagonal staircases; a simple pixel's
    removal keeps its neighbours in one 8-component, so topology is unchanged.
    """
    inner = p[1:-1, 1:-1]
    while True:
        blocks = inner[:-1, :-1] & inner[1:, :-1] & inner[:-1, 1:] & inner[1:, 1:]
        if not blocks.any():
            return
        in_block = np.zeros_like(inner, dtype=bool)
        in_block[:-1, :-1] |= blocks.astype(bool)
        in_block[1:, :-1] |= blocks.astype(bool)
        in_block[:-1, 1:] |= blocks.astype(bool)
        in_block[1:, 1:] |= blocks.astype(bool)
        cand = np.argwhere(in_block)
        removed = False
        for r, c in cand:
            window = p[r:r + 3, c:c + 3].copy()
            if not window[1, 1]:
                continue
            if _is_simple(window) and not _is_endpoint(window):
                p[r + 1, c + 1] = 0
                removed = True
        if not removed:
            return


def _is_endpoint(window: np.ndarray) -> bool:
    return int(window.sum()) - 1 <= 1


def _is_simple(window: np.ndarray) -> bool:
    """Removing the centre keeps its foreground neighbours in one 8-component."""
    w = window.astype(bool).copy()
    w[1, 1] = False
    if not w.any():
        return False
    _, n = ndimage.label(w, structure=SQUARE)
    return n == 1


@dataclass(frozen=True)
class WallSegment:
    orientation: str  # "horizontal" or "vertical"
    line: int  # row for horizontal runs, column for vertical runs
    start: int  # first pixel along the run
    end: int  # last pixel along the run (inclusive)

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def endpoints(self) -> tuple[tuple[int, int], tuple[int, int]]:
        """``((col, row), (col, row))`` cell coordinates."""
        if self.orientation == "horizontal":
            return (self.start, self.line), (self.end, self.line)
        return (self.line, self.start), (self.line, self.end)


@dataclass
class WallLines:
    segments: list[WallSegment]
    orientation_histogram: dict[int, int]  # quantized angle in degrees -> number of runs

    def coverage(self, shape) -> np.ndarray:
        m = np.zeros(shape, dtype=bool)
        for s in self.segments:
            if s.orientation == "horizontal":
                m[s.line, s.start:s.end + 1] = True
            else:
                m[s.start:s.end + 1, s.line] = True
        return m


def _runs(black: np.ndarray, min_len: int):
    """Maximal runs of True along axis 1: arrays of (row, start, end_inclusive)."""
    h, _ = black.shape
    padded = np.zeros((h, black.shape[1] + 2), dtype=np.int8)
    padded[:, 1:-1] = black
    d = np.diff(padded, axis=1)
    sr, sc = np.nonzero(d == 1)
    _, ec = np.nonzero(d == -1)
    ends = ec - 1
    keep = ends - sc + 1 >= min_len
    return sr[keep], sc[keep], ends[keep]


def extract_walls(img: ImageMap, min_wall_len: int = 10) -> WallLines:
    """Maximal axis-aligned black runs of at least ``min_wall_len`` pixels."""
    black = img.pixels == BLACK
    segs = []
    rows, s, e = _runs(black, min_wall_len)
    segs += [WallSegment("horizontal", int(r), int(a), int(b)) for r, a, b in zip(rows, s, e)]
    cols, s, e = _runs(black.T, min_wall_len)
    segs += [WallSegment("vertical", int(c), int(a), int(b)) for c, a, b in zip(cols, s, e)]
    hist = {0: sum(1 for x in segs if x.orientation == "horizontal"),
            90: sum(1 for x in segs if x.orientation == "vertical")}
    return WallLines(segs, hist)


def close_doorways(black: np.ndarray, walls: WallLines, gap_max: int) -> np.ndarray:
    """Extend every wall run across non-black gaps of 1..gap_max pixels that end on black."""
    barrier = black.copy()
    h, w = black.shape
    for seg in walls.segments:
        if seg.orientation == "horizontal":
            line, limit = black[seg.line, :], w
        else:
            line, limit = black[:, seg.line], h
        # forward
        ahead = line[seg.end + 1: min(limit, seg.end + 2 + gap_max)]
        hits = np.flatnonzero(ahead)
        if hits.size and 1 <= hits[0] <= gap_max:
            _fill(barrier, seg, seg.end + 1, seg.end + 1 + hits[0])
        # backward
        lo = max(0, seg.start - 1 - gap_max)
        behind = line[lo:seg.start][::-1]
        hits = np.flatnonzero(behind)
        if hits.size and 1 <= hits[0] <= gap_max:
            _fill(barrier, seg, seg.start - hits[0], seg.start)
    return barrier


def _fill(barrier, seg, a, b):
    if seg.orientation == "horizontal":
        barrier[seg.line, a:b] = True
    else:
        barrier[a:b, seg.line] = True


@dataclass
class Region:
    id: int
    color: tuple[int, int, int]
    pixel_count: int
    centroid: tuple[float, float]  # world coordinates (pixel indices when no geometry)


@dataclass
class SemanticMap:
    labels: np.ndarray  # int32 (height, width); 0 = unassigned
    regions: dict[int, Region] = field(default_factory=dict)
    next_id: int = 1
    geometry: GridGeometry | None = None

    @classmethod
    def empty(cls, shape, geometry=None) -> "SemanticMap":
        return cls(np.zeros(shape, dtype=np.int32), {}, 1, geometry)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]


def region_color(region_id: int) -> tuple[int, int, int]:
    """Deterministic, well-spread palette (golden-ratio hue walk)."""
    hue = (region_id * 0.618033988749895) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.65, 0.95)
    return (int(round(r * 255)), int(round(g * 255)), int(round(b * 255)))


@dataclass(frozen=True)
class SegmentationParams:
    door_gap_max: float = 1.2  # m
    min_region_area: float = 1.0  # m^2
    min_wall_len: float = 1.0  # m

    def in_pixels(self, resolution: float) -> tuple[int, int, int]:
        gap = int(round(self.door_gap_max / resolution))
        area = int(round(self.min_region_area / (resolution * resolution)))
        wall = int(round(self.min_wall_len / resolution))
        return gap, area, wall


def _grow_into(labels: np.ndarray, target: np.ndarray) -> None:
    """Geodesic 4-neighbour growth of nonzero labels into ``target`` pixels (in place)."""
    todo = target & (labels == 0)
    while todo.any():
        grown = False
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            src = np.zeros_like(labels)
            if dr == 1:
                src[1:, :] = labels[:-1, :]
            elif dr == -1:
                src[:-1, :] = labels[1:, :]
            elif dc == 1:
                src[:, 1:] = labels[:, :-1]
            else:
                src[:, :-1] = labels[:, 1:]
            take = todo & (src > 0)
            if take.any():
                labels[take] = src[take]
                todo &= ~take
                grown = True
        if not grown:
            return


def segment_regions(
    img: ImageMap,
    walls: WallLines,
    prev: SemanticMap | None = None,
    params: SegmentationParams = SegmentationParams(),
    start: tuple[int, int] | None = None,
) -> SemanticMap:
    """Close doorways, flood-fill free space into regions and keep ids stable against ``prev``.

    ``start`` is an optional ``(col, row)`` pixel whose component is always
    kept, however small.
    """
    geom = img.geometry
    res = geom.resolution if geom is not None else 0.1
    gap_px, min_px, _ = params.in_pixels(res)
    white = img.pixels == WHITE
    black = img.pixels == BLACK
    barrier = close_doorways(black, walls, gap_px)
    open_free = white & ~barrier
    comp, n = ndimage.label(open_free, structure=CROSS)
    sizes = np.bincount(comp.ravel(), minlength=n + 1)
    keep = sizes >= min_px
    keep[0] = False
    if start is not None:
        sc, sr = start
        if 0 <= sr < comp.shape[0] and 0 <= sc < comp.shape[1] and comp[sr, sc] > 0:
            keep[comp[sr, sc]] = True

    labels = np.where(keep[comp], comp, 0).astype(np.int32)
    _grow_into(labels, white & barrier)

    # small pockets join their largest labelled 4-neighbour
    small = [i for i in range(1, n + 1) if not keep[i]]
    if small:
        slices = ndimage.find_objects(comp)
        pending = set(small)
        while pending:
            counts = np.bincount(labels.ravel())
            progressed = False
            for i in sorted(pending):
                sl = slices[i - 1]
                r0, r1 = max(0, sl[0].start - 1), min(comp.shape[0], sl[0].stop + 1)
                c0, c1 = max(0, sl[1].start - 1), min(comp.shape[1], sl[1].stop + 1)
                local = comp[r0:r1, c0:c1] == i
                ring = ndimage.binary_dilation(local, structure=CROSS) & ~local
                neigh = labels[r0:r1, c0:c1][ring]
                neigh = neigh[neigh > 0]
                if neigh.size == 0:
                    continue
                cands = np.unique(neigh)
                best = int(cands[np.argmax(counts[cands])])
                labels[r0:r1, c0:c1][local] = best
                pending.discard(i)
                progressed = True
            if not progressed:
                break
        _grow_into(labels, white & barrier)

    return _match_ids(labels, prev, geom)


def _match_ids(provisional: np.ndarray, prev: SemanticMap | None, geom) -> SemanticMap:
    prov_ids = np.unique(provisional)
    prov_ids = prov_ids[prov_ids > 0]
    counts = np.bincount(provisional.ravel())
    # larger regions claim previous ids first; ties by raster order of the provisional label
    order = sorted(prov_ids.tolist(), key=lambda i: (-int(counts[i]), i))
    next_id = prev.next_id if prev is not None else 1
    taken: dict[int, int] = {}
    mapping: dict[int, int] = {}
    for pid in order:
        new_id = None
        if prev is not None:
            under = prev.labels[provisional == pid]
            under = under[under > 0]
            if under.size:
                ov = np.bincount(under)
                cands = np.flatnonzero(ov)
                ranked = sorted(cands.tolist(), key=lambda c: (-int(ov[c]), c))
                for cand in ranked:
                    if cand not in taken:
                        new_id = cand
                        break
                if len(cands) > 1 and new_id is not None:
                    log.debug("regions %s merged into %d", [c for c in ranked if c != new_id], new_id)
        if new_id is None:
            new_id = next_id
            next_id += 1
        taken[new_id] = pid
        mapping[pid] = new_id

    lut = np.zeros(int(provisional.max()) + 1, dtype=np.int32)
    for pid, nid in mapping.items():
        lut[pid] = nid
    labels = lut[provisional]
    regions = {}
    coms = ndimage.center_of_mass(np.ones_like(labels), labels, list(mapping.values())) if mapping else []
    for nid, (r, c) in zip(mapping.values(), coms):
        if geom is not None:
            cx, cy = geom.cell_to_world(c, r)
        else:
            cx, cy = float(c), float(r)
        regions[nid] = Region(nid, region_color(nid), int((labels == nid).sum()), (float(cx), float(cy)))
    regions = dict(sorted(regions.items()))
    return SemanticMap(labels, regions, max(next_id, max(regions, default=0) + 1), geom)


def build_semantic_map(img: ImageMap, prev: SemanticMap | None = None,
                       params: SegmentationParams = SegmentationParams(), start=None) -> SemanticMap:
    res = img.geometry.resolution if img.geometry is not None else 0.1
    walls = extract_walls(img, params.in_pixels(res)[2])
    return segment_regions(img, walls, prev, params, start)


def region_of(sem: SemanticMap, grid: OccupancyGrid, p) -> int | None:
    """Region id of the cell containing world point ``p``; ``None`` when unlabelled."""
    ix, iy = grid.geometry.world_to_cell(p[0], p[1])
    if not grid.geometry.in_extent(ix, iy):
        raise OutOfExtentError(f"point {p} outside the map extent")
    rid = int(sem.labels[iy, ix])
    return rid if rid > 0 else None


def export_skeleton_pgm(skel: SkeletonMap, path) -> None:
    pixels = np.where(skel.skeleton, 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(pgm_bytes(pixels))


def semantic_rgb(sem: SemanticMap, img: ImageMap | None = None) -> np.ndarray:
    """RGB raster, unlabelled pixels shown with the image map's grey level."""
    h, w = sem.labels.shape
    if img is not None:
        rgb = np.repeat(img.pixels[:, :, None], 3, axis=2).astype(np.uint8)
    else:
        rgb = np.full((h, w, 3), GREY, dtype=np.uint8)
    for rid, reg in sem.regions.items():
        rgb[sem.labels == rid] = reg.color
    return rgb


def export_semantic_ppm(sem: SemanticMap, path, img: ImageMap | None = None) -> None:
    rgb = semantic_rgb(sem, img)
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb[::-1]).tobytes())


def export_palette_csv(sem: SemanticMap, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("id,r,g,b,pixel_count\n")
        for rid, reg in sem.regions.items():
            r, g, b = reg.color
            fh.write(f"{rid},{r},{g},{b},{reg.pixel_count}\n")
