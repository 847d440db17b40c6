"""Static collision-free corridor around the reference trajectory.

For every reference point the ESDF is scanned along the perpendicular to the
point's heading; maximal lateral runs where the queried distance stays at or
above the obstacle standoff become candidate boundary pairs.  Association
then picks, per station, the candidate with the largest lateral overlap with
the previous station's selection, producing a closed corridor that encodes
static obstacles dually as free space.

The ego footprint is three equal circles strung along the heading; a circle
center is admissible at a station when its signed lateral offset lies inside
the corridor pair shrunk by the circle radius.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .esdf import EsdfMap, OutOfBoundsError, query_distance
from .kernels import Interval


class CorridorError(RuntimeError):
    """Corridor generation failed (blocked station or broken association)."""


@dataclass(frozen=True)
class ReferencePoint:
    x: float
    y: float
    theta: float  # radians, normalized to (-pi, pi]
    t: float      # seconds


@dataclass(frozen=True)
class BoundaryPair:
    """Lateral corridor bounds at one station, left positive."""

    left_offset: float
    right_offset: float

    def __post_init__(self):
        if not self.right_offset < self.left_offset:
            raise ValueError(
                f"boundary pair must have right < left, got "
                f"({self.right_offset}, {self.left_offset})"
            )

    @property
    def width(self):
        return self.left_offset - self.right_offset

    @property
    def midpoint(self):
        return 0.5 * (self.left_offset + self.right_offset)

    def overlap(self, other: "BoundaryPair"):
        """Length of the lateral intersection with another pair (<= 0 if disjoint)."""
        return min(self.left_offset, other.left_offset) - max(
            self.right_offset, other.right_offset
        )


@dataclass
class Corridor:
    """Per-station boundary pairs, aligned 1:1 with the reference points."""

    pairs: List[BoundaryPair]

    def __len__(self):
        return len(self.pairs)

    def dump_text(self, reference):
        """Station index plus world-frame left/right boundary points."""
        lines = ["station left_x left_y right_x right_y"]
        for i, (pair, ref) in enumerate(zip(self.pairs, reference)):
            nx, ny = -np.sin(ref.theta), np.cos(ref.theta)
            lx, ly = ref.x + pair.left_offset * nx, ref.y + pair.left_offset * ny
            rx, ry = ref.x + pair.right_offset * nx, ref.y + pair.right_offset * ny
            lines.append(f"{i} {lx:.3f} {ly:.3f} {rx:.3f} {ry:.3f}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class EgoShape:
    """Three-circle vehicle approximation: one radius, centers along heading."""

    radius: float = 1.0
    offsets: tuple = (-1.5, 0.0, 1.5)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"circle radius must be > 0, got {self.radius}")
        if not all(a < b for a, b in zip(self.offsets, self.offsets[1:])):
            raise ValueError(f"circle offsets must be strictly increasing, got {self.offsets}")


def boundary_search(esdf: EsdfMap, ref_pt: ReferencePoint, d_obs: float,
                    d_max: float) -> List[BoundaryPair]:
    """Scan the perpendicular at one reference point for free lateral runs.

    Walks lateral offsets from -d_max (right) to +d_max (left) in steps of
    the grid resolution and returns each maximal run where the interpolated
    distance stays >= d_obs as a candidate pair.  Runs touching the scan ends
    are clamped at +/-d_max.  Returns [] when the station is fully blocked.
    """
    if not (0 < d_obs < d_max):
        raise ValueError(f"need 0 < d_obs < d_max, got d_obs={d_obs}, d_max={d_max}")
    step = esdf.spec.resolution
    offsets = np.arange(-d_max, d_max + 0.5 * step, step)
    offsets[-1] = min(offsets[-1], d_max)
    nx, ny = -np.sin(ref_pt.theta), np.cos(ref_pt.theta)
    xs = ref_pt.x + offsets * nx
    ys = ref_pt.y + offsets * ny
    free = np.zeros(len(offsets), dtype=bool)
    inb = esdf.spec.contains(xs, ys)
    if inb.any():
        dist = query_distance(esdf, xs[inb], ys[inb])
        free[inb] = np.asarray(dist) >= d_obs

    pairs = []
    edges = np.flatnonzero(np.diff(np.concatenate(([False], free, [False]))))
    for start, stop in zip(edges[::2], edges[1::2]):
        lo, hi = offsets[start], offsets[stop - 1]
        if hi > lo:  # degenerate single-sample runs are unusable
            pairs.append(BoundaryPair(left_offset=hi, right_offset=lo))
    return pairs


def boundary_association(candidates: List[List[BoundaryPair]]) -> Corridor:
    """Chain per-station candidates into a corridor.

    Station 0 takes the candidate containing lateral offset 0 (the reference
    itself).  Each later station takes the candidate with maximal overlap
    against the previous selection; ties prefer the closer midpoint, then the
    right (lower) interval.  Zero overlap anywhere fails the corridor.
    """
    if not candidates:
        raise CorridorError("no stations to associate")
    selected: List[BoundaryPair] = []
    for i, cands in enumerate(candidates):
        if not cands:
            raise CorridorError(f"station {i} is blocked (no free interval)")
        if i == 0:
            containing = [c for c in cands if c.right_offset <= 0.0 <= c.left_offset]
            if not containing:
                raise CorridorError("station 0: no candidate contains the reference point")
            # deterministic if several touch zero: narrowest gap to zero midpoint
            choice = min(containing, key=lambda c: (abs(c.midpoint), c.right_offset))
        else:
            prev = selected[-1]
            best = None
            for c in cands:
                key = (-c.overlap(prev), abs(c.midpoint - prev.midpoint),
                       c.midpoint, c.right_offset)
                if best is None or key < best[0]:
                    best = (key, c)
            choice = best[1]
            if choice.overlap(prev) <= 0.0:
                raise CorridorError(
                    f"station {i}: no candidate overlaps the previous selection"
                )
        selected.append(choice)
    return Corridor(pairs=selected)


def generate_corridor(esdf: EsdfMap, reference, d_obs: float, d_max: float) -> Corridor:
    """Full corridor pipeline: per-station boundary search, then association."""
    candidates = [boundary_search(esdf, p, d_obs, d_max) for p in reference]
    return boundary_association(candidates)


def ego_circle_centers(node_pose, shape: EgoShape):
    """Circle centers for pose (x, y, theta): position displaced along heading."""
    x, y, theta = node_pose
    u = np.array([np.cos(theta), np.sin(theta)])
    return np.array([x, y]) + np.asarray(shape.offsets)[:, None] * u


def lateral_offset(p, nearest_ref: ReferencePoint) -> float:
    """Signed perpendicular offset of p from the reference line, left positive."""
    dx = p[0] - nearest_ref.x
    dy = p[1] - nearest_ref.y
    return float(dy * np.cos(nearest_ref.theta) - dx * np.sin(nearest_ref.theta))


def nearest_reference_index(p, reference) -> int:
    """Index of the closest reference point by planar distance, ties to lower index."""
    pts = np.array([[r.x, r.y] for r in reference])
    d2 = (pts[:, 0] - p[0]) ** 2 + (pts[:, 1] - p[1]) ** 2
    return int(np.argmin(d2))


def corridor_bounds_at(corr: Corridor, nearest_ref_index: int, shape: EgoShape) -> Interval:
    """Admissible lateral band for a circle center at one station.

    The boundary pair shrinks by the circle radius on both sides; an empty
    result means the corridor is narrower than the vehicle at this station.
    """
    pair = corr.pairs[nearest_ref_index]
    lo = pair.right_offset + shape.radius
    hi = pair.left_offset - shape.radius
    if lo > hi:
        raise CorridorError(
            f"station {nearest_ref_index}: corridor narrower than vehicle "
            f"(width {pair.width:.3f} < {2 * shape.radius:.3f})"
        )
    return Interval(lo, hi)
