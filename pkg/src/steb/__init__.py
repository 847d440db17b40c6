"""Spatio-temporal elastic band trajectory planner.

Pipeline: rasterize the environment into an occupancy grid, compute the
Euclidean signed distance field, generate a collision-free corridor around
the reference trajectory, index predicted dynamic obstacles in (x, y, t),
build the constraint hypergraph over the (x, y, t) trajectory nodes, and
minimize the weighted-sum objective with damped sparse nonlinear least
squares.  A scenario harness replans at a fixed rate and reports post
encroachment time, velocity, jerk and timing metrics.
"""

from .corridor import (BoundaryPair, Corridor, CorridorError, EgoShape,
                       ReferencePoint, boundary_association, boundary_search,
                       corridor_bounds_at, ego_circle_centers, generate_corridor,
                       lateral_offset, nearest_reference_index)
from .dynamic_env import (DynamicObstacle, PillSample, SemanticClass, StIndex,
                          classify, pill_clearance, predict_constant_velocity,
                          query_activation)
from .esdf import (EsdfMap, GridSpec, OccupancyGrid, OutOfBoundsError,
                   compute_esdf, query_distance, rasterize_environment)
from .graph import (Edge, GraphBuildError, Hypergraph, ParamSet, StebNode,
                    build_graph, heading, init_nodes, residual_anchor,
                    residual_corridor, residual_dynamic, residual_kinodynamic)
from .harness import (MetricsReport, ObstacleScript, Scenario, TrajectoryLog,
                      compute_metrics, compute_pet, plan_once, run_scenario)
from .kernels import Interval, e_inter, e_less, e_more, weighted_cost
from .solver import (NormalEquations, SolveReport, SolverConfig, SolverError,
                     build_normal_equations, numeric_jacobian, solve)

__version__ = "0.1.0"
