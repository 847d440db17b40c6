"""Dynamic obstacles: classification, prediction, pill geometry, (x, y, t) index.

Obstacles slower than 0.2 m/s count as static and belong in the occupancy
grid; everything else gets a constant-velocity prediction sampled into pill
footprints (segment between the front/rear bounding-box centers plus a disc
of half the box width).  All samples live in a spatio-temporal index that
answers the proximity queries gating dynamic-obstacle edge creation.
"""

import enum
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

STATIC_SPEED_THRESHOLD = 0.2  # m/s


class SemanticClass(enum.Enum):
    VEHICLE = "vehicle"
    CYCLIST = "cyclist"
    PEDESTRIAN = "pedestrian"

    @classmethod
    def parse(cls, name: str) -> "SemanticClass":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown semantic class {name!r}") from None


# vulnerable classes get the temporal-only constraint; the rest the
# spatio-temporal one (overridable per ParamSet)
TEMPORAL_ONLY_CLASSES = frozenset({SemanticClass.PEDESTRIAN})


def classify(speed: float) -> str:
    """'static' below the 0.2 m/s threshold, otherwise 'dynamic'."""
    if speed < 0:
        raise ValueError(f"speed must be >= 0, got {speed}")
    return "static" if speed < STATIC_SPEED_THRESHOLD else "dynamic"


@dataclass(frozen=True)
class PillSample:
    """One predicted footprint: capsule from rear to front box center."""

    seg_a: np.ndarray  # rear box center (x, y)
    seg_b: np.ndarray  # front box center (x, y)
    radius: float      # half box width
    t: float
    heading: float

    def __post_init__(self):
        object.__setattr__(self, "seg_a", np.asarray(self.seg_a, dtype=float))
        object.__setattr__(self, "seg_b", np.asarray(self.seg_b, dtype=float))
        if self.radius <= 0:
            raise ValueError(f"pill radius must be > 0, got {self.radius}")

    @property
    def midpoint(self):
        return 0.5 * (self.seg_a + self.seg_b)


@dataclass
class DynamicObstacle:
    obstacle_id: str
    semantic: SemanticClass
    samples: List[PillSample]

    def __post_init__(self):
        ts = np.array([s.t for s in self.samples])
        if len(ts) >= 2:
            dts = np.diff(ts)
            if not (dts > 0).all():
                raise ValueError(f"obstacle {self.obstacle_id}: sample times not strictly increasing")
            if not np.allclose(dts, dts[0], atol=1e-9):
                raise ValueError(f"obstacle {self.obstacle_id}: sample interval not uniform")


def pill_clearance(p, sample: PillSample) -> float:
    """Point-to-capsule clearance: point-segment distance minus the radius.

    Negative values mean penetration.
    """
    p = np.asarray(p, dtype=float)
    a, b = sample.seg_a, sample.seg_b
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.hypot(*(p - a))) - sample.radius
    s = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    closest = a + s * ab
    return float(np.hypot(*(p - closest))) - sample.radius


def segment_clearance(pts, seg_a, seg_b, radius):
    """Vectorized pill_clearance for an array of points, shape (n, 2)."""
    pts = np.asarray(pts, dtype=float)
    a = np.asarray(seg_a, dtype=float)
    ab = np.asarray(seg_b, dtype=float) - a
    denom = float(ab @ ab)
    rel = pts - a
    if denom == 0.0:
        return np.hypot(rel[:, 0], rel[:, 1]) - radius
    s = np.clip(rel @ ab / denom, 0.0, 1.0)
    closest = a + s[:, None] * ab
    diff = pts - closest
    return np.hypot(diff[:, 0], diff[:, 1]) - radius


def _polyline_cumlen(path):
    seg = np.diff(path, axis=0)
    return np.concatenate(([0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))))


def polyline_point_at(path, arclen):
    """Position and tangent heading at an arc length along a polyline.

    Beyond either end the polyline is extended straight along the end segment.
    """
    path = np.asarray(path, dtype=float)
    cum = _polyline_cumlen(path)
    total = cum[-1]
    s = float(arclen)
    if total == 0.0:
        return path[0].copy(), 0.0
    idx = int(np.searchsorted(cum, np.clip(s, 0.0, total), side="right") - 1)
    idx = min(max(idx, 0), len(path) - 2)
    seg = path[idx + 1] - path[idx]
    seg_len = np.hypot(*seg)
    heading = float(np.arctan2(seg[1], seg[0]))
    frac = (s - cum[idx]) / seg_len if seg_len > 0 else 0.0
    return path[idx] + frac * seg, heading


def project_to_polyline(path, p):
    """Arc length along the polyline closest to point p."""
    path = np.asarray(path, dtype=float)
    p = np.asarray(p, dtype=float)
    cum = _polyline_cumlen(path)
    best = (np.inf, 0.0)
    for i in range(len(path) - 1):
        a, b = path[i], path[i + 1]
        ab = b - a
        denom = float(ab @ ab)
        s = float(np.clip((p - a) @ ab / denom, 0.0, 1.0)) if denom > 0 else 0.0
        q = a + s * ab
        d = float(np.hypot(*(p - q)))
        if d < best[0]:
            best = (d, cum[i] + s * np.sqrt(denom))
    return best[1]


def predict_constant_velocity(state, horizon: float, dt: float,
                              path=None, length: float = 4.2, width: float = 1.8,
                              t0: float = 0.0) -> List[PillSample]:
    """Sample pill footprints at t0, t0+dt, ... t0+horizon at constant speed.

    Without a path the obstacle advances along its heading ray; with a path
    polyline it advances by arc length from the projection of its position.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if horizon < dt:
        raise ValueError(f"horizon must be >= dt, got {horizon} < {dt}")
    x, y, heading, speed = state
    n_steps = int(np.floor(horizon / dt + 1e-9)) + 1
    times = t0 + np.arange(n_steps) * dt
    radius = max(width / 2.0, 1e-6)
    half = length / 2.0

    samples = []
    if path is None:
        u = np.array([np.cos(heading), np.sin(heading)])
        start = np.array([x, y], dtype=float)
        for k, t in enumerate(times):
            pos = start + speed * (k * dt) * u
            samples.append(PillSample(seg_a=pos - half * u, seg_b=pos + half * u,
                                      radius=radius, t=float(t), heading=heading))
    else:
        path = np.asarray(path, dtype=float)
        s0 = project_to_polyline(path, (x, y))
        for k, t in enumerate(times):
            pos, hd = polyline_point_at(path, s0 + speed * (k * dt))
            u = np.array([np.cos(hd), np.sin(hd)])
            samples.append(PillSample(seg_a=pos - half * u, seg_b=pos + half * u,
                                      radius=radius, t=float(t), heading=hd))
    return samples


@dataclass
class StIndex:
    """Spatio-temporal index over all pill-sample reference points.

    Planar lookups go through a kd-tree over the sample midpoints; the time
    gate is applied on the candidate set, so results match a linear scan.
    """

    obstacles: List[DynamicObstacle]
    mids: np.ndarray = field(init=False)      # (N, 2)
    times: np.ndarray = field(init=False)     # (N,)
    radii: np.ndarray = field(init=False)     # (N,)
    obs_idx: np.ndarray = field(init=False)   # (N,) index into obstacles
    sample_idx: np.ndarray = field(init=False)
    semantics: np.ndarray = field(init=False)  # (N,) class value strings
    _tree: Optional[cKDTree] = field(init=False, default=None)

    def __post_init__(self):
        mids, times, radii, oi, si, sem = [], [], [], [], [], []
        for i, obs in enumerate(self.obstacles):
            for j, s in enumerate(obs.samples):
                mids.append(s.midpoint)
                times.append(s.t)
                radii.append(s.radius)
                oi.append(i)
                si.append(j)
                sem.append(obs.semantic.value)
        self.mids = np.array(mids, dtype=float).reshape(-1, 2)
        self.times = np.array(times, dtype=float)
        self.radii = np.array(radii, dtype=float)
        self.obs_idx = np.array(oi, dtype=int)
        self.sample_idx = np.array(si, dtype=int)
        self.semantics = np.array(sem, dtype=object)
        if len(self.mids):
            self._tree = cKDTree(self.mids)

    def __len__(self):
        return len(self.times)

    def query_activation_arrays(self, xy, t, planar_radius, temporal_radius):
        """Flat sample indices activated by each query node.

        xy is (n, 2), t is (n,).  A sample activates a node when its planar
        distance is < planar_radius AND its time gap is < temporal_radius.
        Returns a list of sorted index arrays, one per node.
        """
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        t = np.asarray(t, dtype=float).reshape(-1)
        if self._tree is None:
            return [np.empty(0, dtype=int) for _ in range(len(xy))]
        hits = self._tree.query_ball_point(xy, r=planar_radius, p=2.0)
        out = []
        for k, idxs in enumerate(hits):
            idxs = np.sort(np.asarray(idxs, dtype=int))
            if len(idxs) == 0:
                out.append(idxs)
                continue
            keep = np.abs(self.times[idxs] - t[k]) < temporal_radius
            # strict planar inequality (ball query is <=)
            d = np.hypot(self.mids[idxs, 0] - xy[k, 0], self.mids[idxs, 1] - xy[k, 1])
            out.append(idxs[keep & (d < planar_radius)])
        return out


def query_activation(index: StIndex, node, params) -> List[Tuple[str, PillSample]]:
    """Samples near a STEB node in both space and time (the C6 gate).

    `node` provides x, y, t attributes; `params` provides beta_d, d_min,
    beta_t, t_min.  Returns (obstacle_id, sample) pairs in deterministic
    (obstacle, sample) order.
    """
    flat = index.query_activation_arrays(
        np.array([[node.x, node.y]]), np.array([node.t]),
        planar_radius=params.beta_d * params.d_min,
        temporal_radius=params.beta_t * params.t_min,
    )[0]
    result = []
    for f in flat:
        obs = index.obstacles[index.obs_idx[f]]
        result.append((obs.obstacle_id, obs.samples[index.sample_idx[f]]))
    return result
