"""Command-line front end: plan once, run a scenario, or benchmark them all."""

import argparse
import os
import sys
from dataclasses import dataclass

from .bench import bench_all, summary_table
from .config import (ConfigError, atomic_write, load_params, load_scenario,
                     load_solver_config)
from .corridor import CorridorError
from .graph import GraphBuildError, ParamSet
from .harness import ScenarioError, plan_once, run_scenario
from .solver import SolverConfig, SolverError


@dataclass
class RunManifest:
    command: str
    scenario: str = ""
    params: str = ""
    solver: str = ""
    out: str = "out"
    seed: int = 0
    workers: int = 1


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="steb",
        description="Spatio-temporal elastic band trajectory planner")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_scenario in (("plan-once", True), ("run-scenario", True),
                                 ("bench-all", False)):
        p = sub.add_parser(name)
        if needs_scenario:
            p.add_argument("--scenario", required=True, help="scenario file path")
        p.add_argument("--params", default=None, help="parameter file path")
        p.add_argument("--solver", default=None, help="solver config file path")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=0,
                       help="seed for optional fixture generation")
        p.add_argument("--workers", type=int, default=1,
                       help="concurrent scenarios for bench-all")
    return parser


def _load_inputs(args):
    params = load_params(args.params) if args.params else ParamSet()
    solver_cfg = load_solver_config(args.solver) if args.solver else SolverConfig()
    return params, solver_cfg


def _trajectory_table(state) -> str:
    lines = ["k x y t"]
    for k, (x, y, t) in enumerate(state):
        lines.append(f"{k} {x:.3f} {y:.3f} {t:.3f}")
    return "\n".join(lines) + "\n"


def _cmd_plan_once(args) -> int:
    params, solver_cfg = _load_inputs(args)
    scenario = load_scenario(args.scenario)
    graph, report, _, diagnostics = plan_once(scenario, params, solver_cfg)
    atomic_write(os.path.join(args.out, "trajectory.txt"), _trajectory_table(graph.state))
    atomic_write(os.path.join(args.out, "solve_report.txt"), report.dump_text())
    corridor_violation, dynamic_margin, static_clearance = diagnostics
    print(f"planned {len(graph.state)} nodes in {report.wall_time_ms:.1f} ms "
          f"(cost {report.initial_cost:.3f} -> {report.final_cost:.3f}, "
          f"corridor violation {corridor_violation:.3f} m, "
          f"static clearance {static_clearance:.3f} m)")
    return 0


def _cmd_run_scenario(args) -> int:
    params, solver_cfg = _load_inputs(args)
    scenario = load_scenario(args.scenario)
    log, metrics = run_scenario(scenario, params, solver_cfg)
    atomic_write(os.path.join(args.out, "trajectory_log.txt"), log.dump_text())
    atomic_write(os.path.join(args.out, "metrics.txt"), metrics.dump_text())
    print(metrics.dump_text(), end="")
    return 0 if metrics.passed else 1


def _cmd_bench_all(args) -> int:
    params, solver_cfg = _load_inputs(args)
    results = bench_all(params, solver_cfg, workers=args.workers)
    for r in results:
        directory = os.path.join(args.out, r.name)
        atomic_write(os.path.join(directory, "trajectory_log.txt"), r.log.dump_text())
        atomic_write(os.path.join(directory, "metrics.txt"), r.metrics.dump_text())
    table = summary_table(results)
    atomic_write(os.path.join(args.out, "bench_summary.txt"), table)
    print(table, end="")
    return 0 if all(r.metrics.passed for r in results) else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "plan-once": _cmd_plan_once,
        "run-scenario": _cmd_run_scenario,
        "bench-all": _cmd_bench_all,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, CorridorError, GraphBuildError, SolverError,
            ScenarioError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
