"""Experiment orchestration: sweep execution and deterministic persistence.

Every float is serialized with 17 significant digits so that re-runs (and
runs at different parallelism levels) produce byte-identical CSV files; the
only field exempt from byte-stability is the wall-clock entry in report.json.
Horizon workers are independent; the parent writes all files in sweep order.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .control import ControlProblem, solve_optimal
from .operators import assemble_form, norm_interior
from .steady import solve_steady_optimality
from .turnpike import TurnpikeReport, build_report, solution_map_probe

__all__ = ["run_experiment", "SolverFailure", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1

#: number of random data pairs used by the in-run solution-map probe
PROBE_SAMPLES = 2
PROBE_SEED = 0


class SolverFailure(RuntimeError):
    """A horizon failed to solve; carries the horizon for CLI reporting."""

    def __init__(self, message: str, horizon: float = float("nan")):
        super().__init__(message)
        self.horizon = horizon

    @classmethod
    def wrap(cls, horizon: float, cause: Exception) -> "SolverFailure":
        return cls(f"horizon T={horizon:g} failed: {cause}", horizon)

    def __reduce__(self):  # survives the worker-process boundary
        return (SolverFailure, (self.args[0], self.horizon))


@dataclass(frozen=True)
class HorizonResult:
    T: float
    report: TurnpikeReport
    cost: float
    cost_bound: float
    iterations: int
    grad_norm: float
    adjoint_start_norm: float
    state_end_norm: float


def _fmt(x) -> str:
    """17-significant-digit decimal form; exact round trip for doubles."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _json_dump(obj, indent: int = 0) -> str:
    """Deterministic JSON writer with 17-digit floats and sorted keys."""
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = ",\n".join(
            f'{pad}  "{key}": {_json_dump(obj[key], indent + 1)}' for key in sorted(obj)
        )
        return "{\n" + items + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = ",\n".join(f"{pad}  {_json_dump(v, indent + 1)}" for v in obj)
        return "[\n" + items + "\n" + pad + "]"
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return '"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return _fmt(obj)


def _run_horizon(config: ExperimentConfig, T: float) -> HorizonResult:
    grid = config.grid()
    spec = config.domain_spec()
    beta = config.beta_field(grid)
    u_d = config.target_values(grid)
    problem = ControlProblem(
        variant=config.variant,
        spec=spec,
        grid=grid,
        u_d=u_d,
        tg=config.time_grid(T),
        beta=beta if config.variant == "robin" else None,
        cg_tol=config.cg_tol,
        max_iter=config.max_iter,
    )
    forms = problem.forms
    sol = solve_optimal(problem)
    steady = solve_steady_optimality(config.variant, forms, u_d)
    report = build_report(forms, problem, sol, steady)
    return HorizonResult(
        T=T,
        report=report,
        cost=sol.cost,
        cost_bound=0.5 * T * norm_interior(forms, u_d) ** 2,
        iterations=sol.iterations,
        grad_norm=sol.grad_norm,
        adjoint_start_norm=norm_interior(forms, sol.trajectory.adjoint[0]),
        state_end_norm=norm_interior(forms, sol.trajectory.state[-1]),
    )


def _horizon_worker(args) -> HorizonResult:
    config, T = args
    try:
        return _run_horizon(config, T)
    except Exception as exc:  # surfaced as SolverFailure by the parent
        raise SolverFailure.wrap(T, exc) from exc


def _run_probe(config: ExperimentConfig) -> dict:
    grid = config.grid()
    spec = config.domain_spec()
    beta = config.beta_field(grid)
    forms = assemble_form(grid, spec, beta)
    T0 = min(config.horizons)
    out = {}
    for T in (T0, 2.0 * T0):
        ratio = solution_map_probe(
            forms,
            beta if config.variant == "robin" else None,
            config.time_grid(T),
            samples=PROBE_SAMPLES,
            seed=PROBE_SEED,
            variant=config.variant,
        )
        out[f"T={T:g}"] = ratio
    return out


def _deviation_csv(res: HorizonResult) -> str:
    c = res.report.curves
    lines = ["t,err_state,err_adjoint,err_control"]
    for k in range(c.times.size):
        lines.append(
            ",".join(_fmt(v) for v in (c.times[k], c.state[k], c.adjoint[k], c.control[k]))
        )
    return "\n".join(lines) + "\n"


def _sweep_csv(results: list[HorizonResult]) -> str:
    lines = ["T,avg_err_state,avg_err_control,gamma_hat,C_hat,r2,envelope_pass"]
    for res in results:
        r = res.report
        lines.append(
            ",".join(
                [
                    _fmt(res.T),
                    _fmt(r.avg_err_state),
                    _fmt(r.avg_err_control),
                    "inf" if np.isinf(r.gamma_hat) else _fmt(r.gamma_hat),
                    _fmt(r.C_hat),
                    _fmt(r.r2),
                    "true" if r.envelope_pass else "false",
                ]
            )
        )
    return "\n".join(lines) + "\n"


def run_experiment(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    jobs: int = 1,
) -> Path:
    """Run the configured sweep and persist deviation/sweep/report artifacts.

    Returns the output directory.  Horizons run in a process pool when
    jobs > 1; outputs are written by this process in sweep order either way.
    """
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()

    tasks = [(config, T) for T in config.horizons]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_horizon_worker, tasks))
    else:
        results = [_horizon_worker(t) for t in tasks]

    probe = None
    if "json" in config.formats:
        try:
            probe = _run_probe(config)
        except Exception as exc:
            raise SolverFailure.wrap(min(config.horizons), exc) from exc
    wall_clock = time.perf_counter() - t_start

    if "csv" in config.formats:
        for res in results:
            (out / f"deviation_T{res.T:g}.csv").write_text(_deviation_csv(res))
        (out / "sweep.csv").write_text(_sweep_csv(results))
    if "json" in config.formats:
        summaries = [
            {
                "T": res.T,
                "cost": res.cost,
                "cost_bound": res.cost_bound,
                "iterations": res.iterations,
                "grad_norm": res.grad_norm,
                "avg_err_state": res.report.avg_err_state,
                "avg_err_control": res.report.avg_err_control,
                "gamma_hat": None if np.isinf(res.report.gamma_hat) else res.report.gamma_hat,
                "C_hat": res.report.C_hat,
                "r2": res.report.r2,
                "envelope_pass": res.report.envelope_pass,
                "adjoint_start_norm": res.adjoint_start_norm,
                "state_end_norm": res.state_end_norm,
            }
            for res in results
        ]
        report = {
            "schema_version": SCHEMA_VERSION,
            "version": __version__,
            "config": config.raw,
            "horizons": summaries,
            "probe": probe,
            "wall_clock_seconds": wall_clock,
        }
        (out / "report.json").write_text(_json_dump(report) + "\n")
    return out
