"""Occupancy-grid rasterization and Euclidean signed distance field.

The drivable area and static obstacle footprints are projected onto a grid
(cell-center containment), then an exact Euclidean distance transform gives
each free cell its distance to the nearest occupied cell.  Occupied cells
carry the negated distance to the nearest free cell, so the sign of the
field encodes occupancy: free > 0, occupied <= 0.
"""

from dataclasses import dataclass

import numpy as np
import shapely
from scipy import ndimage


class OutOfBoundsError(ValueError):
    """Query point lies outside the grid extent (distinct from occupied)."""


@dataclass(frozen=True)
class GridSpec:
    """Grid geometry: origin is the lower-left corner of cell (0, 0)."""

    origin_x: float
    origin_y: float
    resolution: float
    width: int   # cells along x
    height: int  # cells along y

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError(f"resolution must be > 0, got {self.resolution}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"grid must have positive size, got {self.width}x{self.height}")

    def cell_centers(self):
        """Meshgrid of cell-center coordinates, shape (height, width)."""
        xs = self.origin_x + (np.arange(self.width) + 0.5) * self.resolution
        ys = self.origin_y + (np.arange(self.height) + 0.5) * self.resolution
        return np.meshgrid(xs, ys)

    def contains(self, x, y):
        """True where (x, y) lies inside the full grid extent."""
        x = np.asarray(x)
        y = np.asarray(y)
        return (
            (x >= self.origin_x)
            & (x <= self.origin_x + self.width * self.resolution)
            & (y >= self.origin_y)
            & (y <= self.origin_y + self.height * self.resolution)
        )


@dataclass
class OccupancyGrid:
    spec: GridSpec
    cells: np.ndarray  # bool, shape (height, width); True = occupied

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=bool)
        if self.cells.shape != (self.spec.height, self.spec.width):
            raise ValueError(
                f"cell array shape {self.cells.shape} does not match spec "
                f"({self.spec.height}, {self.spec.width})"
            )


@dataclass
class EsdfMap:
    spec: GridSpec
    dist: np.ndarray  # meters, shape (height, width); free > 0, occupied <= 0

    def query(self, x, y):
        return query_distance(self, x, y)

    def dump_text(self):
        """Row-major distance matrix, 3 decimal places, for external plotting."""
        lines = []
        for row in self.dist:
            lines.append(" ".join(f"{v:.3f}" for v in row))
        return "\n".join(lines) + "\n"


def _as_polygon(poly):
    if isinstance(poly, shapely.Polygon):
        return poly
    return shapely.Polygon(np.asarray(poly, dtype=float))


def rasterize_environment(drivable, static_obstacles, spec: GridSpec) -> OccupancyGrid:
    """Project drivable polygons and obstacle footprints onto the grid.

    A cell is occupied iff its center lies outside every drivable polygon or
    inside any static obstacle footprint.
    """
    drivable = [_as_polygon(p) for p in drivable]
    if not drivable:
        raise ValueError("no drivable polygons: an all-occupied map is a configuration error")
    obstacles = [_as_polygon(p) for p in (static_obstacles or [])]

    cx, cy = spec.cell_centers()
    inside_drivable = np.zeros(cx.shape, dtype=bool)
    for poly in drivable:
        inside_drivable |= shapely.contains_xy(poly, cx, cy)
    occupied = ~inside_drivable
    for poly in obstacles:
        occupied |= shapely.contains_xy(poly, cx, cy)
    return OccupancyGrid(spec=spec, cells=occupied)


def _nearest_distances(mask):
    """Exact cell-unit distance from each True cell to the nearest False cell.

    Distances are computed from the transform's nearest-cell indices with a
    single np.hypot so results are bit-comparable with a brute-force scan.
    """
    ii, jj = np.indices(mask.shape)
    _, (ni, nj) = ndimage.distance_transform_edt(mask, return_indices=True, return_distances=True)
    return np.hypot(ii - ni, jj - nj)


def compute_esdf(grid: OccupancyGrid) -> EsdfMap:
    """Exact signed distance field from an occupancy grid.

    Free cells get +distance to the nearest occupied cell center; occupied
    cells get -distance to the nearest free cell center (0 if none exists).
    """
    occ = grid.cells
    if not occ.any():
        raise ValueError("all-free grid: no obstacle boundary exists")
    res = grid.spec.resolution
    dist = _nearest_distances(~occ) * res  # free side
    if occ.all():
        dist = np.zeros_like(dist)
    else:
        inner = _nearest_distances(occ) * res
        dist[occ] = -inner[occ]
    return EsdfMap(spec=grid.spec, dist=dist)


def query_distance(esdf: EsdfMap, x, y):
    """Bilinear interpolation of the distance field at world points.

    Accepts scalars or arrays.  Raises OutOfBoundsError if any point lies
    outside the grid extent.
    """
    spec = esdf.spec
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.all(spec.contains(x, y)):
        raise OutOfBoundsError("query point outside grid extent")
    # continuous index space of cell centers, clamped at the border band
    u = np.clip((x - spec.origin_x) / spec.resolution - 0.5, 0.0, spec.width - 1.0)
    v = np.clip((y - spec.origin_y) / spec.resolution - 0.5, 0.0, spec.height - 1.0)
    j0 = np.minimum(np.floor(u).astype(int), spec.width - 2) if spec.width > 1 else np.zeros_like(u, dtype=int)
    i0 = np.minimum(np.floor(v).astype(int), spec.height - 2) if spec.height > 1 else np.zeros_like(v, dtype=int)
    j1 = np.minimum(j0 + 1, spec.width - 1)
    i1 = np.minimum(i0 + 1, spec.height - 1)
    fu = u - j0
    fv = v - i0
    d = esdf.dist
    val = (
        d[i0, j0] * (1 - fu) * (1 - fv)
        + d[i0, j1] * fu * (1 - fv)
        + d[i1, j0] * (1 - fu) * fv
        + d[i1, j1] * fu * fv
    )
    if val.ndim == 0:
        return float(val)
    return val


def grid_spec_for_bounds(min_x, min_y, max_x, max_y, resolution, margin=0.0) -> GridSpec:
    """GridSpec covering a bounding box plus margin, snapped to whole cells."""
    min_x -= margin
    min_y -= margin
    width = int(np.ceil((max_x + margin - min_x) / resolution))
    height = int(np.ceil((max_y + margin - min_y) / resolution))
    return GridSpec(origin_x=min_x, origin_y=min_y, resolution=resolution,
                    width=max(width, 1), height=max(height, 1))
