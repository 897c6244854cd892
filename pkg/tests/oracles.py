"""Independent reference implementations used by several test modules."""
import heapq
import math

import numpy as np

SQRT2 = math.sqrt(2.0)


def dijkstra_moves(trav, start, goal):
    """Shortest 8-connected route (no corner cutting) as ``(straight, diagonal)`` move counts.

    Costs ``s + d*sqrt(2)`` are distinct for distinct integer pairs, so comparing
    the pairs is an exact comparison of path costs.  ``None`` when unreachable.
    """
    h, w = trav.shape
    best = {start: (0, 0)}
    heap = [(0.0, 0, 0, start)]
    done = set()
    while heap:
        _, s, d, cur = heapq.heappop(heap)
        if cur in done:
            continue
        done.add(cur)
        if cur == goal:
            return s, d
        x, y = cur
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if not (dx or dy):
                    continue
                nx, ny = x + dx, y + dy
                if not (0 <= nx < w and 0 <= ny < h and trav[ny, nx]) or (nx, ny) in done:
                    continue
                if dx and dy and not (trav[y, nx] and trav[ny, x]):
                    continue
                nxt = (s, d + 1) if dx and dy else (s + 1, d)
                old = best.get((nx, ny))
                if old is None or nxt[0] + SQRT2 * nxt[1] < old[0] + SQRT2 * old[1]:
                    best[(nx, ny)] = nxt
                    heapq.heappush(heap, (nxt[0] + SQRT2 * nxt[1], nxt[0], nxt[1], (nx, ny)))
    return None


def move_counts(cells):
    straight = diag = 0
    for (x0, y0), (x1, y1) in zip(cells, cells[1:]):
        if x0 != x1 and y0 != y1:
            diag += 1
        else:
            straight += 1
    return straight, diag


def image_reference(states):
    """Cell-by-cell class to pixel mapping, written as a plain loop."""
    out = np.empty(np.shape(states), dtype=np.uint8)
    for r, row in enumerate(states):
        for c, v in enumerate(row):
            out[r, c] = {0: 205, 1: 254, 2: 0}[int(v)]
    return out


def brute_gain(grid, p, side):
    """Unknown minus known area over cell centres in the half-open square around ``p``."""
    xs, ys = grid.geometry.cell_centers()
    half = side / 2
    inside = (xs >= p[0] - half) & (xs < p[0] + half) & (ys >= p[1] - half) & (ys < p[1] + half)
    unknown = int((inside & (grid.state == 0)).sum())
    known = int(inside.sum()) - unknown
    return (unknown - known) * grid.geometry.cell_area
