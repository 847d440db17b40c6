"""Scenario simulation: fixed-rate replanning loop and evaluation metrics.

Each cycle advances the scripted obstacles, rebuilds the reference window,
corridor and obstacle predictions, solves the hypergraph, and executes the
first interval of the plan on an ideal tracker (the ego follows the planned
trajectory exactly).  Logs capture executed states, planned trajectories,
obstacle footprints and solver timing; metrics cover post encroachment time,
mean velocity, maximum jerk and solve-time statistics.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import shapely

from .corridor import (CorridorError, EgoShape, ReferencePoint,
                       ego_circle_centers, generate_corridor)
from .dynamic_env import (DynamicObstacle, PillSample, SemanticClass, StIndex,
                          classify, polyline_point_at, predict_constant_velocity,
                          project_to_polyline, _polyline_cumlen)
from .esdf import EsdfMap, compute_esdf, grid_spec_for_bounds, rasterize_environment
from .graph import GraphBuildError, Hypergraph, ParamSet, build_graph
from .solver import SolverConfig, SolverError, solve

REFERENCE_SPACING = 0.5  # m, longitudinal spacing of reference points


class ScenarioError(RuntimeError):
    """Scenario is malformed or failed beyond the tolerated cycle budget."""


@dataclass
class ObstacleScript:
    """Scripted traffic participant following a path at constant speed."""

    obstacle_id: str
    semantic: SemanticClass
    path: np.ndarray        # (k, 2) polyline
    speed: float
    length: float
    width: float
    start_offset: float = 0.0  # initial arc length along the path

    def pose_at(self, t: float):
        s = self.start_offset + self.speed * t
        pos, heading = polyline_point_at(self.path, s)
        return pos, heading

    def pill_at(self, t: float) -> PillSample:
        pos, heading = self.pose_at(t)
        u = np.array([np.cos(heading), np.sin(heading)])
        half = self.length / 2.0
        return PillSample(seg_a=pos - half * u, seg_b=pos + half * u,
                          radius=max(self.width / 2.0, 1e-6), t=t, heading=heading)


@dataclass
class Scenario:
    name: str
    drivable: List[np.ndarray]
    static_obstacles: List[np.ndarray]
    obstacles: List[ObstacleScript]
    reference_path: np.ndarray
    reference_speed: float
    duration: float
    conflict_zone: Optional[np.ndarray] = None
    replan_period: float = 0.05
    horizon: float = 10.0
    map_resolution: float = 0.25
    map_margin: float = 3.0
    ego_start: Optional[Tuple[float, float, float, float]] = None  # x, y, theta, v

    def __post_init__(self):
        if self.replan_period <= 0:
            raise ScenarioError("replan period must be > 0")
        if self.duration <= 0:
            raise ScenarioError("duration must be > 0")
        if not self.drivable:
            raise ScenarioError("scenario needs at least one drivable polygon")

    def initial_ego(self):
        if self.ego_start is not None:
            return tuple(float(v) for v in self.ego_start)
        path = np.asarray(self.reference_path, dtype=float)
        pos, heading = polyline_point_at(path, 0.0)
        return float(pos[0]), float(pos[1]), float(heading), float(self.reference_speed)


@dataclass
class CycleRecord:
    cycle: int
    t: float
    x: float
    y: float
    theta: float
    v: float
    a: float
    solve_ms: float = float("nan")
    failed: bool = False
    coast: bool = False
    planned: Optional[np.ndarray] = None
    corridor_violation: float = float("nan")
    dynamic_margin: float = float("nan")
    static_clearance: float = float("nan")
    obstacles: List[Tuple[str, PillSample]] = field(default_factory=list)


@dataclass
class TrajectoryLog:
    scenario_name: str
    replan_period: float
    ego_shape: EgoShape
    records: List[CycleRecord] = field(default_factory=list)

    def dump_text(self) -> str:
        lines = ["cycle t x y theta v a solve_ms"]
        for r in self.records:
            solve = f"{r.solve_ms:.2f}" if np.isfinite(r.solve_ms) else "nan"
            lines.append(
                f"{r.cycle} {r.t:.3f} {r.x:.3f} {r.y:.3f} {r.theta:.4f} "
                f"{r.v:.3f} {r.a:.3f} {solve}")
        return "\n".join(lines) + "\n"


@dataclass
class MetricsReport:
    pet_s: Optional[float]
    pet_first_agent: Optional[str]
    mean_velocity: float
    max_abs_jerk: float
    solve_ms_min: float
    solve_ms_avg: float
    solve_ms_max: float
    cycles: int
    failed_cycles: int
    passed: bool
    notes: str = ""

    def dump_text(self) -> str:
        pet = f"{self.pet_s:.3f}" if self.pet_s is not None else "no-conflict"
        first = self.pet_first_agent if self.pet_first_agent is not None else "-"
        return "\n".join([
            f"pet_s = {pet}",
            f"pet_first_agent = {first}",
            f"mean_velocity_mps = {self.mean_velocity:.3f}",
            f"max_abs_jerk_mps3 = {self.max_abs_jerk:.3f}",
            f"solve_ms_min = {self.solve_ms_min:.2f}",
            f"solve_ms_avg = {self.solve_ms_avg:.2f}",
            f"solve_ms_max = {self.solve_ms_max:.2f}",
            f"cycles = {self.cycles}",
            f"failed_cycles = {self.failed_cycles}",
            f"status = {'pass' if self.passed else 'fail'}",
        ]) + "\n"


# ---------------------------------------------------------------------------
# environment assembly

def _rect_polygon(center, length, width, heading):
    center = np.asarray(center, dtype=float)
    u = np.array([np.cos(heading), np.sin(heading)])
    nvec = np.array([-u[1], u[0]])
    hl, hw = length / 2.0, width / 2.0
    return np.array([
        center + hl * u + hw * nvec,
        center - hl * u + hw * nvec,
        center - hl * u - hw * nvec,
        center + hl * u - hw * nvec,
    ])


def build_static_map(scenario: Scenario) -> EsdfMap:
    """Rasterize drivable area plus static footprints and compute the ESDF.

    Scripted obstacles below the dynamic-speed threshold are frozen at their
    initial pose and treated as static.
    """
    polys = [np.asarray(p, dtype=float) for p in scenario.drivable]
    statics = [np.asarray(p, dtype=float) for p in scenario.static_obstacles]
    for script in scenario.obstacles:
        if classify(script.speed) == "static":
            pos, heading = script.pose_at(0.0)
            statics.append(_rect_polygon(pos, script.length, script.width, heading))
    all_pts = np.vstack(polys)
    spec = grid_spec_for_bounds(all_pts[:, 0].min(), all_pts[:, 1].min(),
                                all_pts[:, 0].max(), all_pts[:, 1].max(),
                                scenario.map_resolution, scenario.map_margin)
    grid = rasterize_environment(polys, statics, spec)
    return compute_esdf(grid)


def _dynamic_scripts(scenario: Scenario) -> List[ObstacleScript]:
    return [s for s in scenario.obstacles if classify(s.speed) == "dynamic"]


def build_reference_window(scenario: Scenario, ego, t_now: float) -> List[ReferencePoint]:
    """Reference points from the ego pose along the scripted path.

    Point 0 is the exact ego pose/time; later points sit every 0.5 m along
    the path at the scripted uniform speed, out to the planning horizon or
    the path end, whichever comes first.
    """
    path = np.asarray(scenario.reference_path, dtype=float)
    total = _polyline_cumlen(path)[-1]
    v_ref = max(scenario.reference_speed, 1e-3)
    s_ego = project_to_polyline(path, (ego[0], ego[1]))
    window_len = scenario.horizon * v_ref
    points = [ReferencePoint(x=ego[0], y=ego[1], theta=ego[2], t=t_now)]
    k = 1
    while True:
        s = s_ego + k * REFERENCE_SPACING
        if s > total or k * REFERENCE_SPACING > window_len:
            break
        pos, heading = polyline_point_at(path, s)
        points.append(ReferencePoint(x=float(pos[0]), y=float(pos[1]),
                                     theta=heading, t=t_now + k * REFERENCE_SPACING / v_ref))
        k += 1
    return points


def predict_obstacles(scenario: Scenario, t_now: float, params: ParamSet) -> StIndex:
    obstacles = []
    for script in _dynamic_scripts(scenario):
        pos, heading_now = script.pose_at(t_now)
        samples = predict_constant_velocity(
            (pos[0], pos[1], heading_now, script.speed),
            horizon=scenario.horizon, dt=params.prediction_dt,
            path=script.path, length=script.length, width=script.width, t0=t_now)
        obstacles.append(DynamicObstacle(obstacle_id=script.obstacle_id,
                                         semantic=script.semantic, samples=samples))
    return StIndex(obstacles)


# ---------------------------------------------------------------------------
# plan execution and diagnostics

def _monotone_times(plan: np.ndarray) -> np.ndarray:
    return np.maximum.accumulate(plan[:, 2])


def _interp_plan(plan: np.ndarray, t_query: float, fallback_theta: float):
    """Pose, heading and speed of the planned trajectory at a given time."""
    times = _monotone_times(plan)
    if t_query <= times[0]:
        idx = 0
        tau = 0.0
    elif t_query >= times[-1]:
        seg = plan[-1, :2] - plan[-2, :2]
        theta = math.atan2(seg[1], seg[0]) if (seg != 0).any() else fallback_theta
        return float(plan[-1, 0]), float(plan[-1, 1]), theta, 0.0
    else:
        idx = int(np.searchsorted(times, t_query, side="right") - 1)
        idx = min(max(idx, 0), len(plan) - 2)
        dt = times[idx + 1] - times[idx]
        tau = (t_query - times[idx]) / dt if dt > 1e-9 else 0.0
    seg = plan[idx + 1, :2] - plan[idx, :2]
    seg_len = float(np.hypot(*seg))
    theta = math.atan2(seg[1], seg[0]) if seg_len > 1e-12 else fallback_theta
    dt = max(times[idx + 1] - times[idx], 1e-3)
    v = seg_len / dt
    pos = plan[idx, :2] + tau * seg
    return float(pos[0]), float(pos[1]), theta, v


def _plan_diagnostics(graph: Hypergraph, esdf: EsdfMap, params: ParamSet):
    """Corridor violation, dynamic clearance margin, static clearance."""
    corridor_violation = 0.0
    for g in graph.groups:
        if g.kind == "f10" and len(g):
            r = g.evaluate(graph.state, params)
            corridor_violation = max(corridor_violation, float(r.max()))

    dynamic_margin = float("nan")
    index = graph.st_index
    if index is not None and len(index):
        hits = index.query_activation_arrays(
            graph.state[:, :2], graph.state[:, 2],
            planar_radius=params.beta_d * params.d_min,
            temporal_radius=params.beta_t * params.t_min)
        margins = []
        for k, flat in enumerate(hits):
            for f in flat:
                if index.semantics[f] in params.temporal_classes:
                    continue
                mid = index.mids[f]
                d = math.sqrt((graph.state[k, 0] - mid[0]) ** 2
                              + (graph.state[k, 1] - mid[1]) ** 2
                              + (params.lambda_t * (graph.state[k, 2] - index.times[f])) ** 2)
                d_eff = max(params.d_min, index.radii[f] + params.ego.radius)
                margins.append(d - d_eff)
        if margins:
            dynamic_margin = float(min(margins))

    centers = []
    state = graph.state
    for k in range(len(state)):
        kk = min(k, len(state) - 2)
        seg = state[kk + 1, :2] - state[kk, :2]
        theta = math.atan2(seg[1], seg[0]) if (seg != 0).any() else 0.0
        centers.append(ego_circle_centers((state[k, 0], state[k, 1], theta), params.ego))
    centers = np.vstack(centers)
    inb = esdf.spec.contains(centers[:, 0], centers[:, 1])
    static_clearance = float("nan")
    if inb.any():
        static_clearance = float(np.min(esdf.query(centers[inb, 0], centers[inb, 1])))
    return corridor_violation, dynamic_margin, static_clearance


# ---------------------------------------------------------------------------
# main loop

def run_scenario(scenario: Scenario, params: ParamSet,
                 solver_cfg: SolverConfig) -> Tuple[TrajectoryLog, MetricsReport]:
    """Run the fixed-rate replanning loop over the scenario duration."""
    esdf = build_static_map(scenario)
    log = TrajectoryLog(scenario_name=scenario.name,
                        replan_period=scenario.replan_period,
                        ego_shape=params.ego)
    ego_x, ego_y, ego_theta, ego_v = scenario.initial_ego()
    prev_v = ego_v
    last_plan: Optional[np.ndarray] = None
    n_cycles = int(round(scenario.duration / scenario.replan_period))
    failed = 0
    dynamic_scripts = _dynamic_scripts(scenario)

    for cycle in range(n_cycles):
        t_now = cycle * scenario.replan_period
        ground_truth = [(s.obstacle_id, s.pill_at(t_now)) for s in dynamic_scripts]
        record = CycleRecord(cycle=cycle, t=t_now, x=ego_x, y=ego_y,
                             theta=ego_theta, v=ego_v,
                             a=(ego_v - prev_v) / scenario.replan_period if cycle else 0.0,
                             obstacles=ground_truth)
        reference = build_reference_window(scenario, (ego_x, ego_y, ego_theta), t_now)
        if len(reference) < 4:
            record.coast = True  # end of route: hold the last plan
        else:
            try:
                corridor = generate_corridor(esdf, reference, params.d_obs, params.d_max)
                index = predict_obstacles(scenario, t_now, params)
                graph = build_graph(reference, corridor, index, params,
                                    current_speed=ego_v, current_heading=ego_theta)
                report = solve(graph, solver_cfg)
                record.solve_ms = report.wall_time_ms
                record.planned = graph.state.copy()
                (record.corridor_violation, record.dynamic_margin,
                 record.static_clearance) = _plan_diagnostics(graph, esdf, params)
                last_plan = record.planned
            except (CorridorError, GraphBuildError, SolverError):
                record.failed = True
                failed += 1

        prev_v = ego_v
        if last_plan is not None:
            ego_x, ego_y, ego_theta, ego_v = _interp_plan(
                last_plan, t_now + scenario.replan_period, ego_theta)
        log.records.append(record)

    metrics = compute_metrics(log)
    if scenario.conflict_zone is not None:
        pet, first = compute_pet_details(log, scenario.conflict_zone)
        metrics.pet_s = pet
        metrics.pet_first_agent = first
    if n_cycles and failed / n_cycles > 0.2:
        metrics.passed = False
        metrics.notes = f"{failed}/{n_cycles} cycles failed"
    return log, metrics


def plan_once(scenario: Scenario, params: ParamSet, solver_cfg: SolverConfig):
    """Single plan over the whole scripted route from the initial ego state."""
    esdf = build_static_map(scenario)
    ego = scenario.initial_ego()
    path = np.asarray(scenario.reference_path, dtype=float)
    total = _polyline_cumlen(path)[-1]
    v_ref = max(scenario.reference_speed, 1e-3)
    points = [ReferencePoint(x=ego[0], y=ego[1], theta=ego[2], t=0.0)]
    k = 1
    while k * REFERENCE_SPACING <= total:
        pos, heading = polyline_point_at(path, k * REFERENCE_SPACING)
        points.append(ReferencePoint(x=float(pos[0]), y=float(pos[1]), theta=heading,
                                     t=k * REFERENCE_SPACING / v_ref))
        k += 1
    corridor = generate_corridor(esdf, points, params.d_obs, params.d_max)
    index = predict_obstacles(scenario, 0.0, params)
    graph = build_graph(points, corridor, index, params,
                        current_speed=ego[3], current_heading=ego[2])
    report = solve(graph, solver_cfg)
    diagnostics = _plan_diagnostics(graph, esdf, params)
    return graph, report, points, diagnostics


# ---------------------------------------------------------------------------
# metrics

def _zone_polygon(zone) -> shapely.Polygon:
    if isinstance(zone, shapely.Polygon):
        return zone
    return shapely.Polygon(np.asarray(zone, dtype=float))


def _ego_in_zone(record: CycleRecord, zone, shape: EgoShape) -> bool:
    centers = ego_circle_centers((record.x, record.y, record.theta), shape)
    for c in centers:
        if zone.distance(shapely.Point(c)) <= shape.radius:
            return True
    return False


def _pill_in_zone(sample: PillSample, zone) -> bool:
    if np.allclose(sample.seg_a, sample.seg_b):
        geom = shapely.Point(sample.seg_a)
    else:
        geom = shapely.LineString([sample.seg_a, sample.seg_b])
    return zone.distance(geom) <= sample.radius


def compute_pet_details(log: TrajectoryLog, zone) -> Tuple[Optional[float], Optional[str]]:
    """PET in seconds plus the id of the agent that crossed first.

    The conflict gap is measured between the first agent's last exit from the
    zone and the second agent's first entry, using the three-circle ego
    footprint and the obstacle pill footprints.  Simultaneous occupancy gives
    0; if either agent never occupies the zone there is no conflict (None).
    """
    poly = _zone_polygon(zone)
    ego_times = [r.t for r in log.records if _ego_in_zone(r, poly, log.ego_shape)]
    if not ego_times:
        return None, None
    obstacle_ids = []
    for r in log.records:
        for oid, _ in r.obstacles:
            if oid not in obstacle_ids:
                obstacle_ids.append(oid)
    best: Optional[float] = None
    first_agent = None
    for oid in obstacle_ids:
        obs_times = [r.t for r in log.records
                     for o, s in r.obstacles if o == oid and _pill_in_zone(s, poly)]
        if not obs_times:
            continue
        if ego_times[0] <= obs_times[0]:
            pet = obs_times[0] - ego_times[-1]
            first = "ego"
        else:
            pet = ego_times[0] - obs_times[-1]
            first = oid
        pet = max(pet, 0.0)
        if best is None or pet < best:
            best = pet
            first_agent = first
    if best is None:
        return None, None
    return best, first_agent


def compute_pet(log: TrajectoryLog, zone) -> Optional[float]:
    """Post encroachment time against the conflict zone (None = no conflict)."""
    pet, _ = compute_pet_details(log, zone)
    return pet


def compute_metrics(log: TrajectoryLog) -> MetricsReport:
    """Mean velocity, maximum absolute jerk and solve-time statistics."""
    if not log.records:
        raise ScenarioError("empty trajectory log")
    xs = np.array([r.x for r in log.records])
    ys = np.array([r.y for r in log.records])
    ts = np.array([r.t for r in log.records])
    vs = np.array([r.v for r in log.records])
    arc = float(np.sum(np.hypot(np.diff(xs), np.diff(ys))))
    elapsed = float(ts[-1] - ts[0]) if len(ts) > 1 else 0.0
    mean_v = arc / elapsed if elapsed > 0 else 0.0

    max_jerk = 0.0
    if len(vs) >= 3:
        dt = log.replan_period
        acc = np.diff(vs) / dt
        jerk = np.diff(acc) / dt
        max_jerk = float(np.abs(jerk).max())

    solve_times = np.array([r.solve_ms for r in log.records if np.isfinite(r.solve_ms)])
    if len(solve_times):
        s_min, s_avg, s_max = (float(solve_times.min()), float(solve_times.mean()),
                               float(solve_times.max()))
    else:
        s_min = s_avg = s_max = float("nan")
    failed = sum(1 for r in log.records if r.failed)
    return MetricsReport(
        pet_s=None, pet_first_agent=None,
        mean_velocity=mean_v, max_abs_jerk=max_jerk,
        solve_ms_min=s_min, solve_ms_avg=s_avg, solve_ms_max=s_max,
        cycles=len(log.records), failed_cycles=failed,
        passed=True)
