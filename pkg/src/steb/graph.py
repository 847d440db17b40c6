"""Spatio-temporal hypergraph: STEB nodes plus typed constraint edges.

Nodes are (x, y, t) samples initialized from the reference trajectory.  The
heading of node k is the direction to node k+1 (the last node reuses its
predecessor's), which keeps orientation out of the variable set.  Edges come
in nineteen residual kinds grouped into nine constraint families:

  f1          path length               f10        corridor containment
  f2          turning radius            f11, f12   dynamic obstacles
  f3, f4      time monotonicity         f13, f14   reference anchoring
  f5 .. f9    velocity/accel/jerk       f15 .. f19 start and goal state

Every edge contributes weight * residual**2 to the total cost.  Kernel-based
residuals vanish on their feasible set, so satisfied constraints add neither
cost nor gradient.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.spatial import cKDTree

from .corridor import (Corridor, CorridorError, EgoShape, ReferencePoint,
                       corridor_bounds_at, ego_circle_centers, lateral_offset)
from .dynamic_env import DynamicObstacle, PillSample, StIndex
from .kernels import Interval, e_inter, e_more


class GraphBuildError(RuntimeError):
    """Hypergraph construction failed (bad reference or infeasible corridor)."""


# ---------------------------------------------------------------------------
# parameters

@dataclass
class ParamSet:
    """Weights and limits of all constraint families.

    Defaults reproduce the benchmark configuration; every field can be
    overridden from a parameter file.
    """

    alpha_1: float = 10.0    # path length
    alpha_2: float = 1.0     # turning radius
    alpha_3: float = 1.0     # elapsed time
    alpha_4: float = 100.0   # time monotonicity
    alpha_5: float = 10.0    # linear velocity limits
    alpha_6: float = 100.0   # angular velocity limits
    alpha_7: float = 100.0   # linear acceleration limits
    alpha_8: float = 50.0    # angular acceleration limits
    alpha_9: float = 100.0   # jerk
    alpha_10: float = 200.0  # corridor containment
    alpha_11: float = 200.0  # spatio-temporal obstacle distance
    alpha_12: float = 200.0  # temporal obstacle distance
    alpha_13: float = 0.1    # reference position anchor
    alpha_14: float = 0.1    # reference time anchor
    alpha_15: float = 0.1    # start speed
    alpha_16: float = 0.1    # start heading
    alpha_17: float = 1.0    # goal position
    alpha_18: float = 10.0   # goal heading
    alpha_19: float = 30.0   # goal arrival time

    v_min: float = 0.0       # m/s
    v_max: float = 10.0
    v_ang_min: float = -0.5  # rad/s
    v_ang_max: float = 0.5
    a_min: float = -3.0      # m/s^2
    a_max: float = 2.0
    a_ang_min: float = -0.5  # rad/s^2
    a_ang_max: float = 0.5

    r_min: float = 5.0       # minimum turning radius, m
    d_min: float = 3.0       # minimum spatio-temporal obstacle distance, m
    t_min: float = 4.0       # minimum temporal obstacle distance, s
    beta_d: float = 1.5      # planar activation factor
    beta_t: float = 1.5      # temporal activation factor
    lambda_t: float = 1.0    # m/s scale unifying time inside the 3D distance
    start_nodes: int = 3     # nodes constrained by the start state
    d_obs: float = 0.3       # corridor standoff from obstacles, m
    d_max: float = 6.0       # corridor search half-width, m
    ego: EgoShape = field(default_factory=EgoShape)
    temporal_classes: tuple = ("pedestrian",)  # classes using the time-only constraint
    kernel_eps: float = 0.0  # optional kernel smoothing
    epsilon_t: float = 1e-3  # floor for time denominators, s
    prediction_dt: float = 0.25  # obstacle sampling interval, s

    def __post_init__(self):
        for i in range(1, 20):
            if self.weight(i) < 0:
                raise ValueError(f"alpha_{i} must be >= 0")
        pairs = [("v_min", "v_max"), ("v_ang_min", "v_ang_max"),
                 ("a_min", "a_max"), ("a_ang_min", "a_ang_max")]
        for lo, hi in pairs:
            if getattr(self, lo) > getattr(self, hi):
                raise ValueError(f"{lo} > {hi}")
        if self.lambda_t <= 0:
            raise ValueError("lambda_t must be > 0")
        if self.start_nodes < 1:
            raise ValueError("start_nodes must be >= 1")
        if not (0 < self.d_obs < self.d_max):
            raise ValueError("need 0 < d_obs < d_max")
        for name in ("r_min", "d_min", "t_min", "beta_d", "beta_t", "epsilon_t",
                     "prediction_dt"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    def weight(self, i: int) -> float:
        return getattr(self, f"alpha_{i}")


# ---------------------------------------------------------------------------
# nodes

@dataclass
class StebNode:
    x: float
    y: float
    t: float
    fixed: bool = False


def init_nodes(reference: List[ReferencePoint]) -> List[StebNode]:
    """One node per reference point, copying (x, y, t); node 0 is fixed."""
    if len(reference) < 4:
        raise GraphBuildError(f"need at least 4 reference points, got {len(reference)}")
    ts = np.array([p.t for p in reference])
    if not (np.diff(ts) >= 0).all():
        raise GraphBuildError("reference times must be non-decreasing")
    for p in reference:
        if not all(np.isfinite([p.x, p.y, p.theta, p.t])):
            raise GraphBuildError("reference contains non-finite values")
    nodes = [StebNode(p.x, p.y, p.t) for p in reference]
    nodes[0].fixed = True
    return nodes


def heading(k: int, nodes) -> float:
    """Four-quadrant heading of node k toward node k+1.

    The last node reuses its predecessor's heading; coincident nodes walk
    back to the nearest preceding segment with nonzero length.
    """
    state = _as_state(nodes)
    n = len(state)
    if not 0 <= k <= n - 1:
        raise IndexError(f"node index {k} out of range for {n} nodes")
    k = min(k, n - 2)
    for i in range(k, -1, -1):
        dx = state[i + 1, 0] - state[i, 0]
        dy = state[i + 1, 1] - state[i, 1]
        if dx != 0.0 or dy != 0.0:
            return float(np.arctan2(dy, dx))
    return 0.0


def _as_state(nodes) -> np.ndarray:
    if isinstance(nodes, np.ndarray):
        return nodes
    return np.array([[nd.x, nd.y, nd.t] for nd in nodes], dtype=float)


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return np.arctan2(np.sin(a), np.cos(a))


# ---------------------------------------------------------------------------
# vectorized residual evaluators
#
# vals has shape (m, w, 3) with coordinates (x, y, t); payload entries are
# arrays with leading dimension m (or plain scalars).  Every evaluator
# returns shape (m, R).

_STRAIGHT_EPS = 1e-6  # heading change below which the turning radius is infinite


def _dt(vals, i, j, params):
    return np.maximum(np.abs(vals[:, j, 2] - vals[:, i, 2]), params.epsilon_t)


def _seg_len(vals, i, j):
    return np.hypot(vals[:, j, 0] - vals[:, i, 0], vals[:, j, 1] - vals[:, i, 1])


def _seg_heading(vals, i, j):
    return np.arctan2(vals[:, j, 1] - vals[:, i, 1], vals[:, j, 0] - vals[:, i, 0])


def _eval_f1(vals, payload, p):
    return _seg_len(vals, 0, 1)[:, None]


def _eval_f2(vals, payload, p):
    dth = wrap_angle(_seg_heading(vals, 1, 2) - _seg_heading(vals, 0, 1))
    chord = _seg_len(vals, 0, 1)
    denom = 2.0 * np.abs(np.sin(0.5 * dth))
    straight = np.abs(dth) < _STRAIGHT_EPS
    radius = np.where(straight, np.inf, chord / np.where(straight, 1.0, denom))
    return e_more(radius, p.r_min, p.kernel_eps)[:, None]


def _eval_f3(vals, payload, p):
    return (vals[:, 1, 2] - vals[:, 0, 2])[:, None]


def _eval_f4(vals, payload, p):
    return e_more(vals[:, 1, 2] - vals[:, 0, 2], 0.0, p.kernel_eps)[:, None]


def _eval_f5(vals, payload, p):
    v = _seg_len(vals, 0, 1) / _dt(vals, 0, 1, p)
    return e_inter(v, Interval(p.v_min, p.v_max), p.kernel_eps)[:, None]


def _eval_f6(vals, payload, p):
    dth = np.abs(wrap_angle(_seg_heading(vals, 1, 2) - _seg_heading(vals, 0, 1)))
    v_ang = dth / _dt(vals, 0, 1, p)
    return e_inter(v_ang, Interval(p.v_ang_min, p.v_ang_max), p.kernel_eps)[:, None]


def _eval_f6_tail(vals, payload, p):
    # last node reuses its predecessor's heading, so the angular rate is zero
    v_ang = np.zeros(len(vals)) / _dt(vals, 0, 1, p)
    return e_inter(v_ang, Interval(p.v_ang_min, p.v_ang_max), p.kernel_eps)[:, None]


def _eval_f7(vals, payload, p):
    v0 = _seg_len(vals, 0, 1) / _dt(vals, 0, 1, p)
    v1 = _seg_len(vals, 1, 2) / _dt(vals, 1, 2, p)
    a = (v1 - v0) / _dt(vals, 0, 1, p)
    return e_inter(a, Interval(p.a_min, p.a_max), p.kernel_eps)[:, None]


def _angular_rate(vals, i, j, k, params):
    dth = np.abs(wrap_angle(_seg_heading(vals, j, k) - _seg_heading(vals, i, j)))
    return dth / _dt(vals, i, j, params)


def _eval_f8(vals, payload, p):
    va0 = _angular_rate(vals, 0, 1, 2, p)
    va1 = _angular_rate(vals, 1, 2, 3, p)
    a_ang = (va1 - va0) / _dt(vals, 0, 1, p)
    return e_inter(a_ang, Interval(p.a_ang_min, p.a_ang_max), p.kernel_eps)[:, None]


def _eval_f8_tail(vals, payload, p):
    va0 = _angular_rate(vals, 0, 1, 2, p)
    a_ang = (0.0 - va0) / _dt(vals, 0, 1, p)
    return e_inter(a_ang, Interval(p.a_ang_min, p.a_ang_max), p.kernel_eps)[:, None]


def _eval_f9(vals, payload, p):
    v0 = _seg_len(vals, 0, 1) / _dt(vals, 0, 1, p)
    v1 = _seg_len(vals, 1, 2) / _dt(vals, 1, 2, p)
    v2 = _seg_len(vals, 2, 3) / _dt(vals, 2, 3, p)
    a0 = (v1 - v0) / _dt(vals, 0, 1, p)
    a1 = (v2 - v1) / _dt(vals, 1, 2, p)
    return (np.abs(a1 - a0) / _dt(vals, 0, 1, p))[:, None]


def _eval_f10(vals, payload, p):
    slot = payload["slot"]
    ref = payload["ref"]        # (m, 3 circles, 3: x, y, theta)
    bounds = payload["bounds"]  # (m, 3 circles, 2: lo, hi)
    m = len(vals)
    pos = vals[np.arange(m), slot, :2]
    th = _seg_heading(vals, 0, 1)
    u = np.stack([np.cos(th), np.sin(th)], axis=1)
    offs = np.asarray(p.ego.offsets)
    centers = pos[:, None, :] + offs[None, :, None] * u[:, None, :]  # (m, 3, 2)
    dx = centers[..., 0] - ref[..., 0]
    dy = centers[..., 1] - ref[..., 1]
    lat = dy * np.cos(ref[..., 2]) - dx * np.sin(ref[..., 2])
    return e_inter(lat, Interval(bounds[..., 0], bounds[..., 1]), p.kernel_eps)


def _eval_f11(vals, payload, p):
    obs = payload["obs_xyt"]   # (m, 3)
    d_eff = payload["d_eff"]   # (m,)
    dx = vals[:, 0, 0] - obs[:, 0]
    dy = vals[:, 0, 1] - obs[:, 1]
    dt = p.lambda_t * (vals[:, 0, 2] - obs[:, 2])
    d = np.sqrt(dx * dx + dy * dy + dt * dt)
    return e_more(d, d_eff, p.kernel_eps)[:, None]


def _eval_f12(vals, payload, p):
    gap = np.abs(vals[:, 0, 2] - payload["obs_t"])
    return e_more(gap, p.t_min, p.kernel_eps)[:, None]


def _eval_f13(vals, payload, p):
    ref = payload["ref_xy"]
    return vals[:, 0, :2] - ref  # (m, 2) vector residual; |.|^2 is the distance cost


def _eval_f14(vals, payload, p):
    return np.abs(vals[:, 0, 2] - payload["ref_t"])[:, None]


def _eval_f15(vals, payload, p):
    v = _seg_len(vals, 0, 1) / _dt(vals, 0, 1, p)
    return np.abs(v - payload["v_current"])[:, None]


def _eval_f16(vals, payload, p):
    th = _seg_heading(vals, 0, 1)
    return np.abs(wrap_angle(th - payload["theta_current"]))[:, None]


def _eval_f17(vals, payload, p):
    d = vals[:, 0, :2] - payload["goal_xy"]
    return np.hypot(d[:, 0], d[:, 1])[:, None]


def _eval_f18(vals, payload, p):
    th = _seg_heading(vals, 0, 1)
    return np.abs(wrap_angle(th - payload["goal_theta"]))[:, None]


def _eval_f19(vals, payload, p):
    return np.abs(vals[:, 0, 2] - payload["goal_t"])[:, None]


# kinds whose residual is a penalty kernel: zero residual implies a flat
# (zero-gradient) branch, letting the solver skip those rows entirely
KERNEL_KINDS = frozenset({"f2", "f4", "f5", "f6", "f7", "f8", "f10", "f11", "f12"})

_EVALUATORS: Dict[str, Callable] = {
    "f1": _eval_f1, "f2": _eval_f2, "f3": _eval_f3, "f4": _eval_f4,
    "f5": _eval_f5, "f6": _eval_f6, "f6_tail": _eval_f6_tail, "f7": _eval_f7,
    "f8": _eval_f8, "f8_tail": _eval_f8_tail, "f9": _eval_f9, "f10": _eval_f10,
    "f11": _eval_f11, "f12": _eval_f12, "f13": _eval_f13, "f14": _eval_f14,
    "f15": _eval_f15, "f16": _eval_f16, "f17": _eval_f17, "f18": _eval_f18,
    "f19": _eval_f19,
}

ALL_KINDS = tuple(f"f{i}" for i in range(1, 20))


@dataclass
class EdgeGroup:
    """All edges of one kind, stacked for vectorized evaluation."""

    kind: str               # public kind label (f1..f19)
    variant: str            # evaluator key (may carry a _tail suffix)
    windows: np.ndarray     # (m, w) node indices, consecutive
    payload: Dict[str, np.ndarray]
    weight: float

    def __len__(self):
        return len(self.windows)

    @property
    def width(self):
        return self.windows.shape[1]

    def evaluate(self, state: np.ndarray, params: ParamSet) -> np.ndarray:
        vals = state[self.windows]
        return self.evaluate_vals(vals, params)

    def evaluate_vals(self, vals: np.ndarray, params: ParamSet,
                      rows: Optional[np.ndarray] = None) -> np.ndarray:
        payload = self.payload
        if rows is not None:
            payload = {k: (v[rows] if isinstance(v, np.ndarray) else v)
                       for k, v in payload.items()}
        return np.atleast_2d(_EVALUATORS[self.variant](vals, payload, params))


@dataclass
class Edge:
    """Single-edge view used for inspection, debugging and tests."""

    kind: str
    nodes: tuple
    payload: dict
    weight: float
    _group: EdgeGroup = field(repr=False, default=None)
    _row: int = field(repr=False, default=0)

    def residual(self, state, params):
        vals = np.asarray(state)[np.array([self.nodes])]
        r = self._group.evaluate_vals(vals, params, rows=np.array([self._row]))
        return r[0]


class Hypergraph:
    """STEB nodes plus constraint edge groups, ready for sparse solving.

    The solver mutates `state` in place.  Dynamic-obstacle activations and
    corridor bindings are frozen into payload arrays; `refresh_bindings()`
    rebuilds them from the current node states between optimization rounds.
    """

    def __init__(self, state, fixed, groups, params, reference,
                 corridor=None, st_index=None):
        self.state = np.asarray(state, dtype=float)
        self.fixed = np.asarray(fixed, dtype=bool)
        self.groups: List[EdgeGroup] = groups
        self.params = params
        self.reference = reference
        self.corridor = corridor
        self.st_index = st_index
        self._ref_tree = cKDTree(np.array([[p.x, p.y] for p in reference]))
        self._ref_pose = np.array([[p.x, p.y, p.theta] for p in reference])
        if corridor is not None:
            r = params.ego.radius
            lo = np.array([pair.right_offset + r for pair in corridor.pairs])
            hi = np.array([pair.left_offset - r for pair in corridor.pairs])
            self._station_bounds = np.stack([lo, hi], axis=1)
            self._station_infeasible = lo > hi
        self._edges_cache = None

    @property
    def n_nodes(self):
        return len(self.state)

    @property
    def nodes(self) -> List[StebNode]:
        return [StebNode(x, y, t, fixed=bool(f))
                for (x, y, t), f in zip(self.state, self.fixed)]

    @property
    def edges(self) -> List[Edge]:
        if self._edges_cache is None:
            out = []
            for g in self.groups:
                for row in range(len(g)):
                    payload = {k: (v[row] if isinstance(v, np.ndarray) else v)
                               for k, v in g.payload.items()}
                    out.append(Edge(kind=g.kind, nodes=tuple(int(i) for i in g.windows[row]),
                                    payload=payload, weight=g.weight, _group=g, _row=row))
            self._edges_cache = out
        return self._edges_cache

    def edge_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for g in self.groups:
            counts[g.kind] = counts.get(g.kind, 0) + len(g)
        return counts

    def total_cost(self) -> float:
        total = 0.0
        for g in self.groups:
            if g.weight == 0.0 or len(g) == 0:
                continue
            r = g.evaluate(self.state, self.params)
            total += g.weight * float(np.sum(r * r))
        return total

    def refresh_bindings(self):
        """Re-derive corridor bindings and obstacle activations from the state."""
        for g in self.groups:
            if g.kind == "f10":
                g.payload = self._corridor_payload(g)
        self.groups = [g for g in self.groups if g.kind not in ("f11", "f12")]
        self.groups.extend(self._dynamic_groups())
        self._edges_cache = None

    # -- binding construction ------------------------------------------------

    def _corridor_payload(self, group: EdgeGroup) -> Dict[str, np.ndarray]:
        params = self.params
        slot = group.payload["slot"]
        m = len(group)
        vals = self.state[group.windows]
        pos = vals[np.arange(m), slot, :2]
        th = np.arctan2(vals[:, 1, 1] - vals[:, 0, 1], vals[:, 1, 0] - vals[:, 0, 0])
        u = np.stack([np.cos(th), np.sin(th)], axis=1)
        offs = np.asarray(params.ego.offsets)
        centers = pos[:, None, :] + offs[None, :, None] * u[:, None, :]
        _, nearest = self._ref_tree.query(centers.reshape(-1, 2))
        if self._station_infeasible[nearest].any():
            bad = int(nearest[self._station_infeasible[nearest]][0])
            corridor_bounds_at(self.corridor, bad, params.ego)  # raises CorridorError
        ref = self._ref_pose[nearest].reshape(m, len(offs), 3)
        bounds = self._station_bounds[nearest].reshape(m, len(offs), 2)
        return {"slot": slot, "ref": ref, "bounds": bounds,
                "station": nearest.reshape(m, len(offs))}

    def _dynamic_groups(self) -> List[EdgeGroup]:
        index = self.st_index
        params = self.params
        if index is None or len(index) == 0:
            return []
        hits = index.query_activation_arrays(
            self.state[:, :2], self.state[:, 2],
            planar_radius=params.beta_d * params.d_min,
            temporal_radius=params.beta_t * params.t_min,
        )
        veh_rows, ped_rows = [], []
        for k, flat in enumerate(hits):
            for f in flat:
                sem = index.semantics[f]
                if sem in params.temporal_classes:
                    ped_rows.append((k, int(f)))
                else:
                    veh_rows.append((k, int(f)))
        groups = []
        if veh_rows:
            nodes = np.array([k for k, _ in veh_rows], dtype=int)[:, None]
            flat = np.array([f for _, f in veh_rows], dtype=int)
            obs_xyt = np.column_stack([index.mids[flat], index.times[flat]])
            d_eff = np.maximum(params.d_min, index.radii[flat] + params.ego.radius)
            groups.append(EdgeGroup(
                kind="f11", variant="f11", windows=nodes,
                payload={"obs_xyt": obs_xyt, "d_eff": d_eff,
                         "obs_idx": index.obs_idx[flat],
                         "sample_idx": index.sample_idx[flat]},
                weight=params.weight(11)))
        if ped_rows:
            nodes = np.array([k for k, _ in ped_rows], dtype=int)[:, None]
            flat = np.array([f for _, f in ped_rows], dtype=int)
            groups.append(EdgeGroup(
                kind="f12", variant="f12", windows=nodes,
                payload={"obs_t": index.times[flat],
                         "obs_idx": index.obs_idx[flat],
                         "sample_idx": index.sample_idx[flat]},
                weight=params.weight(12)))
        return groups

    def dump_text(self) -> str:
        """Edge list with kind, node indices, current residual, weight."""
        lines = ["kind nodes residual weight"]
        for e in self.edges:
            r = e.residual(self.state, self.params)
            rnorm = float(np.sqrt(np.sum(r * r)))
            nodes = ",".join(str(i) for i in e.nodes)
            lines.append(f"{e.kind} {nodes} {rnorm:.6f} {e.weight:g}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# graph construction

def _consecutive_windows(n, width, count):
    base = np.arange(count, dtype=int)[:, None]
    return base + np.arange(width, dtype=int)[None, :]


def build_graph(reference: List[ReferencePoint], corridor: Optional[Corridor],
                st_index: Optional[StIndex], params: ParamSet,
                current_speed: Optional[float] = None,
                current_heading: Optional[float] = None) -> Hypergraph:
    """Assemble the full hypergraph from the per-cycle planning inputs.

    `corridor` must be aligned 1:1 with `reference`; pass None to omit the
    corridor family (open-space planning and unit tests).
    """
    nodes = init_nodes(reference)
    n = len(nodes)
    if corridor is not None and len(corridor) != n:
        raise GraphBuildError(
            f"corridor length {len(corridor)} does not match reference length {n}")

    state = _as_state(nodes)
    fixed = np.zeros(n, dtype=bool)
    fixed[0] = True

    if current_speed is None:
        d = np.hypot(reference[1].x - reference[0].x, reference[1].y - reference[0].y)
        dt = max(reference[1].t - reference[0].t, params.epsilon_t)
        current_speed = d / dt
    if current_heading is None:
        current_heading = reference[0].theta

    w = params.weight
    groups: List[EdgeGroup] = []

    def add(kind, variant, windows, payload, weight):
        if len(windows):
            groups.append(EdgeGroup(kind=kind, variant=variant,
                                    windows=np.asarray(windows, dtype=int),
                                    payload=payload, weight=weight))

    add("f1", "f1", _consecutive_windows(n, 2, n - 1), {}, w(1))
    add("f2", "f2", _consecutive_windows(n, 3, n - 2), {}, w(2))
    add("f3", "f3", _consecutive_windows(n, 2, n - 1), {}, w(3))
    add("f4", "f4", _consecutive_windows(n, 2, n - 1), {}, w(4))
    add("f5", "f5", _consecutive_windows(n, 2, n - 1), {}, w(5))
    add("f6", "f6", _consecutive_windows(n, 3, n - 2), {}, w(6))
    add("f6", "f6_tail", np.array([[n - 2, n - 1]]), {}, w(6))
    add("f7", "f7", _consecutive_windows(n, 3, n - 2), {}, w(7))
    add("f8", "f8", _consecutive_windows(n, 4, n - 3), {}, w(8))
    add("f8", "f8_tail", np.array([[n - 3, n - 2, n - 1]]), {}, w(8))
    add("f9", "f9", _consecutive_windows(n, 4, n - 3), {}, w(9))

    if corridor is not None:
        slots = np.zeros(n, dtype=int)
        slots[n - 1] = 1
        windows = np.empty((n, 2), dtype=int)
        windows[: n - 1] = _consecutive_windows(n, 2, n - 1)
        windows[n - 1] = (n - 2, n - 1)
        add("f10", "f10", windows, {"slot": slots}, w(10))

    ref_xy = np.array([[p.x, p.y] for p in reference])
    ref_t = np.array([p.t for p in reference])
    single = np.arange(n, dtype=int)[:, None]
    add("f13", "f13", single, {"ref_xy": ref_xy}, w(13))
    add("f14", "f14", single, {"ref_t": ref_t}, w(14))

    l = min(params.start_nodes, n - 1)
    add("f15", "f15", _consecutive_windows(n, 2, l),
        {"v_current": float(current_speed)}, w(15))
    add("f16", "f16", _consecutive_windows(n, 2, l),
        {"theta_current": float(current_heading)}, w(16))

    goal = reference[-1]
    add("f17", "f17", np.array([[n - 1]]), {"goal_xy": np.array([[goal.x, goal.y]])}, w(17))
    add("f18", "f18", np.array([[n - 2, n - 1]]), {"goal_theta": float(goal.theta)}, w(18))
    add("f19", "f19", np.array([[n - 1]]), {"goal_t": np.array([goal.t])}, w(19))

    graph = Hypergraph(state=state, fixed=fixed, groups=groups, params=params,
                       reference=reference, corridor=corridor, st_index=st_index)
    graph.refresh_bindings()
    return graph


# ---------------------------------------------------------------------------
# single-edge residual operations (test and inspection surface)

def residual_kinodynamic(kind: str, nodes_window, params: ParamSet) -> float:
    """Residual of one kinodynamic edge (f1..f9) over its node window."""
    vals = _as_state(nodes_window)[None, :, :]
    width = vals.shape[1]
    variant = kind
    if kind == "f6" and width == 2:
        variant = "f6_tail"
    if kind == "f8" and width == 3:
        variant = "f8_tail"
    r = np.atleast_2d(_EVALUATORS[variant](vals, {}, params))
    return float(r[0, 0])


def residual_corridor(nodes, k: int, corridor: Corridor,
                      reference: List[ReferencePoint], params: ParamSet) -> np.ndarray:
    """Corridor residuals (one per ego circle) for node k, bindings fresh."""
    state = _as_state(nodes)
    n = len(state)
    th = heading(k, state)
    centers = ego_circle_centers((state[k, 0], state[k, 1], th), params.ego)
    out = np.empty(3)
    for ci, c in enumerate(centers):
        d2 = (np.array([p.x for p in reference]) - c[0]) ** 2 + \
             (np.array([p.y for p in reference]) - c[1]) ** 2
        idx = int(np.argmin(d2))
        iv = corridor_bounds_at(corridor, idx, params.ego)
        lat = lateral_offset(c, reference[idx])
        out[ci] = e_inter(lat, iv, params.kernel_eps)
    return out


def residual_dynamic(node, activation, params: ParamSet) -> float:
    """Dynamic-obstacle residual for one activated (obstacle, sample) pair."""
    obstacle, sample = activation
    x, y, t = (node.x, node.y, node.t) if hasattr(node, "x") else node
    mid = sample.midpoint
    if obstacle.semantic.value in params.temporal_classes:
        return float(e_more(abs(t - sample.t), params.t_min, params.kernel_eps))
    d = np.sqrt((x - mid[0]) ** 2 + (y - mid[1]) ** 2
                + (params.lambda_t * (t - sample.t)) ** 2)
    d_eff = max(params.d_min, sample.radius + params.ego.radius)
    return float(e_more(d, d_eff, params.kernel_eps))


def residual_anchor(kind: str, nodes, k: int, reference: List[ReferencePoint],
                    params: ParamSet, v_current: float = 0.0,
                    theta_current: float = 0.0) -> float:
    """Anchor residual magnitudes (f13..f19); k indexes the anchored node."""
    state = _as_state(nodes)
    n = len(state)
    if kind == "f13":
        return float(np.hypot(state[k, 0] - reference[k].x, state[k, 1] - reference[k].y))
    if kind == "f14":
        return float(abs(state[k, 2] - reference[k].t))
    if kind == "f15":
        v = _seg_len(state[None, k:k + 2], 0, 1) / _dt(state[None, k:k + 2], 0, 1, params)
        return float(abs(v[0] - v_current))
    if kind == "f16":
        th = heading(k, state)
        return float(abs(wrap_angle(th - theta_current)))
    goal = reference[-1]
    if kind == "f17":
        return float(np.hypot(state[n - 1, 0] - goal.x, state[n - 1, 1] - goal.y))
    if kind == "f18":
        return float(abs(wrap_angle(heading(n - 1, state) - goal.theta)))
    if kind == "f19":
        return float(abs(state[n - 1, 2] - goal.t))
    raise ValueError(f"unknown anchor kind {kind!r}")
