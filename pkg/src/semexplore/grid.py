"""World <-> cell affine map shared by every raster product.

Arrays are indexed ``[row, col]`` with row 0 at the minimum-y edge; ``(ix, iy)``
tuples are ``(col, row)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GridGeometry:
    width: int
    height: int
    resolution: float
    origin: tuple[float, float]  # world coordinates of the centre of cell (0, 0)

    @classmethod
    def covering(cls, bounds, resolution: float) -> "GridGeometry":
        xmin, ymin, xmax, ymax = bounds
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        # tolerate float noise such as 10.0 / 0.1 == 99.99999999999999
        width = max(1, int(math.ceil((xmax - xmin) / resolution - 1e-9)))
        height = max(1, int(math.ceil((ymax - ymin) / resolution - 1e-9)))
        origin = (xmin + 0.5 * resolution, ymin + 0.5 * resolution)
        return cls(width, height, float(resolution), origin)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def cell_area(self) -> float:
        return self.resolution * self.resolution

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        ix = int(math.floor((x - self.origin[0]) / self.resolution + 0.5))
        iy = int(math.floor((y - self.origin[1]) / self.resolution + 0.5))
        return ix, iy

    def world_to_cells(self, xs, ys) -> tuple[np.ndarray, np.ndarray]:
        ix = np.floor((np.asarray(xs) - self.origin[0]) / self.resolution + 0.5).astype(np.int64)
        iy = np.floor((np.asarray(ys) - self.origin[1]) / self.resolution + 0.5).astype(np.int64)
        return ix, iy

    def cell_to_world(self, ix, iy):
        return (self.origin[0] + ix * self.resolution, self.origin[1] + iy * self.resolution)

    def in_extent(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def contains_point(self, x: float, y: float) -> bool:
        return self.in_extent(*self.world_to_cell(x, y))

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid of cell-centre coordinates, each of shape ``(height, width)``."""
        xs = self.origin[0] + np.arange(self.width) * self.resolution
        ys = self.origin[1] + np.arange(self.height) * self.resolution
        return np.meshgrid(xs, ys)
