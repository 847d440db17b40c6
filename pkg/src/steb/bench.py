"""Benchmark runner: every bundled scenario through the replanning loop."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

from .graph import ParamSet
from .harness import MetricsReport, TrajectoryLog, run_scenario
from .scenarios import list_bundled, load_bundled
from .solver import SolverConfig


@dataclass
class BenchResult:
    name: str
    log: TrajectoryLog
    metrics: MetricsReport


def bench_all(params: ParamSet, solver_cfg: SolverConfig,
              names: Optional[List[str]] = None, workers: int = 1) -> List[BenchResult]:
    """Run the bundled scenarios and collect logs and metrics per scenario."""
    names = list(names) if names is not None else list_bundled()

    def one(name):
        log, metrics = run_scenario(load_bundled(name), params, solver_cfg)
        return BenchResult(name=name, log=log, metrics=metrics)

    if workers <= 1:
        return [one(n) for n in names]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, names))


def summary_table(results: List[BenchResult]) -> str:
    """Fixed-format table mirroring the evaluation layout, one row per scenario."""
    lines = ["scenario pet_s mean_vel_mps max_jerk_mps3 solve_ms_min solve_ms_avg solve_ms_max status"]
    for r in results:
        m = r.metrics
        pet = f"{m.pet_s:.3f}" if m.pet_s is not None else "no-conflict"
        lines.append(
            f"{r.name} {pet} {m.mean_velocity:.3f} {m.max_abs_jerk:.3f} "
            f"{m.solve_ms_min:.2f} {m.solve_ms_avg:.2f} {m.solve_ms_max:.2f} "
            f"{'pass' if m.passed else 'fail'}")
    overall = all(r.metrics.passed for r in results)
    lines.append(f"overall = {'pass' if overall else 'fail'}")
    return "\n".join(lines) + "\n"
