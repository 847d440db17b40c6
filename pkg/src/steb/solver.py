"""Damped sparse nonlinear least squares over the hypergraph.

Jacobians are central differences evaluated per edge kind on stacked window
arrays; satisfied kernel residuals are skipped entirely (their branch is
flat, so value and gradient are zero).  The normal equations inherit the
chain structure of the graph: with nodes ordered naturally the system matrix
is banded with half-bandwidth at most three node blocks, and each iteration
factors it with a banded Cholesky.  Damping follows the Levenberg-Marquardt
additive rule on the diagonal; steps are accepted only when the total cost
decreases, so the accepted-cost sequence is monotone within a round.

Dynamic-obstacle activations and corridor bindings stay frozen during inner
iterations and are refreshed between outer rounds, tracking the node times
as they move.
"""

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import solveh_banded

from .graph import KERNEL_KINDS, Edge, EdgeGroup, Hypergraph

_DUMMY = -1  # marker for fixed-node columns before remapping


class SolverError(RuntimeError):
    """Solve aborted (singular system or non-finite residuals)."""


@dataclass
class SolverConfig:
    max_outer_rounds: int = 4
    max_inner_iterations: int = 30
    initial_lambda: float = 1e-4
    lambda_up: float = 10.0
    lambda_down: float = 0.5
    cost_tolerance: float = 1e-6     # relative decrease of the total cost
    step_tolerance: float = 1e-9     # absolute infinity-norm of the step
    time_budget_ms: Optional[float] = 200.0
    fd_step: float = 1e-6
    max_escalations: int = 12        # damping retries on a singular system

    def __post_init__(self):
        positive = ["max_outer_rounds", "max_inner_iterations", "initial_lambda",
                    "lambda_up", "lambda_down", "cost_tolerance", "step_tolerance",
                    "fd_step", "max_escalations"]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.cost_tolerance >= 1 or self.step_tolerance >= 1:
            raise ValueError("tolerances must be < 1")
        if self.time_budget_ms is not None and self.time_budget_ms <= 0:
            raise ValueError("time_budget_ms must be > 0 or None")


@dataclass
class SolveReport:
    initial_cost: float
    final_cost: float
    iterations: int
    rounds: int
    per_round_edge_counts: List[int]
    wall_time_ms: float
    converged: bool
    cost_history: List[List[float]] = field(default_factory=list)
    message: str = ""

    def dump_text(self) -> str:
        lines = [
            f"initial_cost = {self.initial_cost!r}",
            f"final_cost = {self.final_cost!r}",
            f"iterations = {self.iterations}",
            f"rounds = {self.rounds}",
            f"per_round_edge_counts = {','.join(str(c) for c in self.per_round_edge_counts)}",
            f"wall_time_ms = {self.wall_time_ms:.3f}",
            f"converged = {'true' if self.converged else 'false'}",
        ]
        if self.message:
            lines.append(f"message = {self.message}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# column bookkeeping

def _column_map(graph: Hypergraph) -> Tuple[np.ndarray, np.ndarray]:
    """Node -> free slot (or -1); plus the ordered free node indices."""
    free_nodes = np.flatnonzero(~graph.fixed)
    colmap = np.full(graph.n_nodes, _DUMMY, dtype=int)
    colmap[free_nodes] = np.arange(len(free_nodes))
    return colmap, free_nodes


def _group_columns(group: EdgeGroup, colmap: np.ndarray, n_cols: int) -> np.ndarray:
    """Global column per local coordinate, fixed nodes mapped to a trash slot."""
    base = colmap[group.windows]                      # (m, w)
    cols = base[:, :, None] * 3 + np.arange(3)[None, None, :]
    cols = cols.reshape(len(group), group.width * 3)
    cols[np.repeat(base == _DUMMY, 3, axis=1)] = n_cols  # trash column
    return cols


# ---------------------------------------------------------------------------
# residuals and jacobians

def _group_residual_and_jacobian(group: EdgeGroup, state: np.ndarray, params,
                                 h: float):
    """Residuals for all rows plus central-difference Jacobians.

    Kernel-kind rows whose residual components are all zero sit on a flat
    branch: their Jacobian rows are zero and are not evaluated at all.
    Returns (r0 (m, R), J (m, R, L), active row indices).
    """
    vals = state[group.windows]
    r0 = group.evaluate_vals(vals, params)
    m, R = r0.shape
    L = group.width * 3
    J = np.zeros((m, R, L))
    if group.kind in KERNEL_KINDS:
        active = np.flatnonzero(np.any(r0 != 0.0, axis=1))
    else:
        active = np.arange(m)
    if len(active) == 0:
        return r0, J, active
    va = vals[active].copy()
    Ja = np.empty((len(active), R, L))
    for s in range(group.width):
        for c in range(3):
            orig = va[:, s, c].copy()
            va[:, s, c] = orig + h
            rp = group.evaluate_vals(va, params, rows=active)
            va[:, s, c] = orig - h
            rm = group.evaluate_vals(va, params, rows=active)
            va[:, s, c] = orig
            Ja[:, :, s * 3 + c] = (rp - rm) / (2.0 * h)
    if group.kind in KERNEL_KINDS:
        Ja[r0[active] == 0.0] = 0.0  # satisfied components stay flat
    J[active] = Ja
    return r0, J, active


def numeric_jacobian(graph: Hypergraph, edge: Edge, h: float) -> Dict[tuple, np.ndarray]:
    """Central-difference partials of one edge residual.

    Returns a mapping (node_index, coord) -> residual partials, with coord
    in {'x', 'y', 't'}.  All touched nodes appear, fixed ones included.
    """
    if h <= 0:
        raise ValueError(f"perturbation must be > 0, got {h}")
    group = edge._group
    row = edge._row
    vals = graph.state[np.array([edge.nodes])].copy()
    rows = np.array([row])
    out = {}
    for s, node in enumerate(edge.nodes):
        for c, coord in enumerate("xyt"):
            orig = vals[0, s, c]
            vals[0, s, c] = orig + h
            rp = group.evaluate_vals(vals, graph.params, rows=rows)[0]
            vals[0, s, c] = orig - h
            rm = group.evaluate_vals(vals, graph.params, rows=rows)[0]
            vals[0, s, c] = orig
            out[(node, coord)] = (rp - rm) / (2.0 * h)
    return out


# ---------------------------------------------------------------------------
# normal equations

@dataclass
class NormalEquations:
    """Gauss-Newton system over the free nodes, 3x3 blocks in node order."""

    h_matrix: np.ndarray      # (3F, 3F) dense array with banded content
    gradient: np.ndarray      # (3F,)
    free_nodes: np.ndarray    # node index per block
    cost: float
    bandwidth: int            # scalar half-bandwidth of h_matrix

    def banded_upper(self) -> np.ndarray:
        """Upper-form banded storage consumed by scipy.linalg.solveh_banded."""
        n = len(self.gradient)
        hb = self.bandwidth
        ab = np.zeros((hb + 1, n))
        for d in range(hb + 1):
            ab[hb - d, d:] = np.diagonal(self.h_matrix, offset=d)
        return ab


def _assemble(graph: Hypergraph, h: float) -> NormalEquations:
    colmap, free_nodes = _column_map(graph)
    n_cols = 3 * len(free_nodes)
    H = np.zeros((n_cols + 1, n_cols + 1))  # extra trash row/column
    g = np.zeros(n_cols + 1)
    cost = 0.0
    bandwidth = 0
    for group in graph.groups:
        if len(group) == 0 or group.weight == 0.0:
            continue
        r0, J, active = _group_residual_and_jacobian(group, graph.state, graph.params, h)
        if not np.isfinite(r0).all():
            raise SolverError(f"non-finite residual in {group.kind}")
        cost += group.weight * float(np.sum(r0 * r0))
        if len(active) == 0:
            continue
        cols = _group_columns(group, colmap, n_cols)[active]
        Ja = J[active]
        JTJ = np.einsum("mra,mrb->mab", Ja, Ja)
        gv = np.einsum("mra,mr->ma", Ja, r0[active])
        np.add.at(H, (cols[:, :, None], cols[:, None, :]), group.weight * JTJ)
        np.add.at(g, cols, group.weight * gv)
        valid = cols < n_cols
        if valid.any():
            span = np.where(valid, cols, -1).max(axis=1) - \
                np.where(valid, cols, n_cols + 1).min(axis=1)
            bandwidth = max(bandwidth, int(span.max(initial=0)))
    return NormalEquations(h_matrix=H[:n_cols, :n_cols], gradient=g[:n_cols],
                           free_nodes=free_nodes, cost=cost,
                           bandwidth=max(bandwidth, 0))


def build_normal_equations(graph: Hypergraph, fd_step: float = 1e-6) -> NormalEquations:
    """Assemble H = sum w J^T J and g = sum w J^T r over the free nodes."""
    if (~graph.fixed).sum() == 0:
        raise SolverError("graph has no free nodes")
    return _assemble(graph, fd_step)


def _total_cost(graph: Hypergraph, state: np.ndarray) -> float:
    total = 0.0
    for group in graph.groups:
        if len(group) == 0 or group.weight == 0.0:
            continue
        r = group.evaluate_vals(state[group.windows], graph.params)
        total += group.weight * float(np.sum(r * r))
    if not np.isfinite(total):
        raise SolverError("non-finite cost")
    return total


# ---------------------------------------------------------------------------
# solve loop

def _binding_signature(graph: Hypergraph):
    parts = []
    for g in graph.groups:
        if g.kind == "f10":
            parts.append((g.payload["ref"].tobytes(), g.payload["bounds"].tobytes()))
        elif g.kind in ("f11", "f12"):
            parts.append((g.kind, g.windows.tobytes(),
                          tuple(sorted((k, v.tobytes()) for k, v in g.payload.items()
                                       if isinstance(v, np.ndarray)))))
    return tuple(parts)


def solve(graph: Hypergraph, config: SolverConfig) -> SolveReport:
    """Minimize the weighted-sum objective, updating graph.state in place."""
    t_start = time.perf_counter()
    if (~graph.fixed).sum() == 0:
        raise SolverError("graph has no free nodes")

    budget_s = None if config.time_budget_ms is None else config.time_budget_ms / 1000.0

    def out_of_time():
        return budget_s is not None and (time.perf_counter() - t_start) > budget_s

    lam = config.initial_lambda
    lam_cap = 1e10
    initial_cost = None
    final_cost = None
    iterations = 0
    rounds_run = 0
    per_round_edges = []
    cost_history: List[List[float]] = []
    converged_last_round = False
    message = ""

    for rnd in range(config.max_outer_rounds):
        if rnd > 0:
            sig_before = _binding_signature(graph)
            graph.refresh_bindings()
            if _binding_signature(graph) == sig_before and converged_last_round:
                break
        rounds_run += 1
        per_round_edges.append(sum(len(g) for g in graph.groups))

        cost = _total_cost(graph, graph.state)
        if initial_cost is None:
            initial_cost = cost
        history = [cost]
        converged_last_round = False

        for _ in range(config.max_inner_iterations):
            ne = _assemble(graph, config.fd_step)
            cost = ne.cost
            if not history or history[-1] != cost:
                history.append(cost)
            if np.abs(ne.gradient).max(initial=0.0) < 1e-12:
                converged_last_round = True
                break

            ab = ne.banded_upper()
            accepted = False
            escalations = 0
            while True:
                ab_damped = ab.copy()
                ab_damped[-1, :] = ab[-1, :] * (1.0 + lam)
                try:
                    delta = solveh_banded(ab_damped, ne.gradient)
                except np.linalg.LinAlgError:
                    delta = None
                except ValueError:
                    delta = None
                if delta is None:
                    escalations += 1
                    if escalations > config.max_escalations:
                        raise SolverError(
                            f"damped system singular after {escalations} escalations")
                    lam = min(lam * config.lambda_up, lam_cap)
                    continue

                iterations += 1
                candidate = graph.state.copy()
                free = ne.free_nodes
                candidate[free] -= delta.reshape(-1, 3)
                new_cost = _total_cost(graph, candidate)
                if new_cost < cost:
                    graph.state[...] = candidate
                    accepted = True
                    history.append(new_cost)
                    step_inf = float(np.abs(delta).max(initial=0.0))
                    rel_drop = (cost - new_cost) / max(cost, 1e-300)
                    cost = new_cost
                    lam = max(lam * config.lambda_down, 1e-12)
                    if rel_drop < config.cost_tolerance or step_inf < config.step_tolerance:
                        converged_last_round = True
                    break
                lam = lam * config.lambda_up
                if lam > lam_cap:
                    # no descent direction left: treat as a local minimum
                    converged_last_round = True
                    break
                if out_of_time():
                    break

            final_cost = cost
            if converged_last_round or not accepted or out_of_time():
                break

        cost_history.append(history)
        final_cost = cost
        if out_of_time():
            message = "time budget exhausted"
            break

    wall_ms = (time.perf_counter() - t_start) * 1000.0
    converged = converged_last_round and final_cost <= initial_cost
    return SolveReport(
        initial_cost=float(initial_cost),
        final_cost=float(final_cost),
        iterations=iterations,
        rounds=rounds_run,
        per_round_edge_counts=per_round_edges,
        wall_time_ms=wall_ms,
        converged=bool(converged),
        cost_history=cost_history,
        message=message,
    )
