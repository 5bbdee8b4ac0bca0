"""
CLI verbs: each takes a validated config and returns tables, a report and an exit code
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional

import numpy as np
import pandas as pd
import structlog

from config import settings
from ..core.fields import make_multilinear
from ..core.gradient import average_gradient, gradient_modulus, quadrature_tolerance
from ..dynamics.ifs import minimal_admissible_points, validate_hypotheses
from ..dynamics.measure import cell_labels, check_invariance, grid_points, simulate_orbit
from ..dynamics.mw_operator import MWOperator
from ..models.experiment import ExperimentConfig
from ..utils.errors import ConfigurationError
from ..utils.metrics import command_duration_seconds, track_time
from .builders import (
    build_distribution, build_field, build_ifs, build_points, build_quadrature
)

logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3


@dataclass
class RunOptions:
    workers: int = 1
    budget: Optional[int] = None


@dataclass
class CommandResult:
    exit_code: int
    table: Optional[pd.DataFrame] = None
    report: Optional[Dict[str, Any]] = None
    extra_tables: Dict[str, pd.DataFrame] = field(default_factory=dict)


def map_partitioned(fn: Callable[[np.ndarray], np.ndarray], points: np.ndarray, workers: int) -> np.ndarray:
    """Split points into contiguous blocks, evaluate them on a thread pool, keep input order"""
    if workers <= 1 or len(points) < 2:
        return fn(points)
    blocks = np.array_split(points, min(workers, len(points)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(fn, blocks))
    return np.concatenate(results)


def _coordinate_frame(points: np.ndarray) -> pd.DataFrame:
    flat = points.reshape(len(points), -1)
    return pd.DataFrame(flat, columns=[f"x{l}" for l in range(flat.shape[1])])


@track_time(command_duration_seconds, command="validate")
def cmd_validate(config: ExperimentConfig, options: RunOptions) -> CommandResult:
    ifs = build_ifs(config)
    report = validate_hypotheses(ifs, config.run.samples, config.run.seed)
    return CommandResult(
        EXIT_OK if report.all_pass else EXIT_FAILED,
        report=report.model_dump(mode="json"),
    )


@track_time(command_duration_seconds, command="iterate")
def cmd_iterate(config: ExperimentConfig, options: RunOptions) -> CommandResult:
    ifs = build_ifs(config)
    f = build_field(config)
    points = build_points(config, ifs)
    operator = MWOperator(ifs)
    depths = config.run.p_values or list(range(config.run.p + 1))
    modulus, estimate = gradient_modulus(f, ifs.tile, seed=config.run.seed)

    quad = build_quadrature(config, ifs)
    limit = make_multilinear(average_gradient(f, ifs.tile, quad))
    limit_values = limit.evaluate(points)

    frames = []
    for p in depths:
        values = map_partitioned(
            lambda block: operator.iterate(
                f, p, block, config.run.algorithm, modulus, options.budget
            ).values,
            points, options.workers
        )
        frame = _coordinate_frame(points)
        frame["p"] = p
        frame["value"] = values
        frame["bound"] = operator.error_bound(p, points, modulus)
        frame["limit"] = limit_values
        frame["gap"] = np.abs(values - limit_values)
        frames.append(frame)
        logger.info("Iterate level done", p=p, points=len(points))

    table = pd.concat(frames, ignore_index=True)
    report = {
        "system": ifs.name,
        "field": f.description,
        "algorithm": config.run.algorithm,
        "beta_sum": ifs.beta_sum,
        "depths": depths,
        "bound_is_estimate": estimate,
        "max_gap_at_last_depth": float(frames[-1]["gap"].max()),
    }
    return CommandResult(EXIT_OK, table=table, report=report)


@track_time(command_duration_seconds, command="limit")
def cmd_limit(config: ExperimentConfig, options: RunOptions) -> CommandResult:
    ifs = build_ifs(config)
    f = build_field(config)
    points = build_points(config, ifs)
    quad = build_quadrature(config, ifs)
    form = average_gradient(f, ifs.tile, quad)
    modulus, estimate = gradient_modulus(f, ifs.tile, seed=config.run.seed)

    frame = _coordinate_frame(points)
    frame["limit"] = form.evaluate(points)
    frame["quadrature_tolerance"] = [
        quadrature_tolerance(f, ifs.tile, quad, x, modulus) for x in points
    ]
    report = {
        "system": ifs.name,
        "field": f.description,
        "lambda": form.flat().tolist(),
        "scheme": config.quadrature.scheme,
        "max_quadrature_tolerance": float(frame["quadrature_tolerance"].max()),
        "bound_is_estimate": estimate,
    }
    return CommandResult(EXIT_OK, table=frame, report=report)


@track_time(command_duration_seconds, command="fixed-point")
def cmd_fixed_point(config: ExperimentConfig, options: RunOptions) -> CommandResult:
    ifs = build_ifs(config)
    f = build_field(config)
    points = build_points(config, ifs)
    operator = MWOperator(ifs)
    report = operator.check_fixed_point(f, points, config.run.tol, config.quadrature.depth)

    frame = _coordinate_frame(points)
    frame["value"] = f.evaluate(points)
    frame["mw_value"] = map_partitioned(lambda block: operator.apply_many(f, block), points, options.workers)
    frame["residual"] = np.abs(frame["mw_value"] - frame["value"])
    return CommandResult(
        EXIT_OK if report.is_fixed else EXIT_FAILED,
        table=frame,
        report=report.model_dump(mode="json"),
    )


@track_time(command_duration_seconds, command="invariance")
def cmd_invariance(config: ExperimentConfig, options: RunOptions) -> CommandResult:
    ifs = build_ifs(config)
    nu = build_distribution(config)
    report = check_invariance(
        ifs, nu, config.run.methods, config.run.tol, config.run.samples,
        config.run.seed, config.run.grid, config.quadrature.depth
    )
    points = grid_points(ifs.tile, config.run.grid)
    operator = MWOperator(ifs)
    frame = _coordinate_frame(points)
    frame["distribution"] = nu.d.evaluate(points)
    frame["pushforward"] = map_partitioned(lambda block: operator.apply_many(nu.d, block), points, options.workers)
    frame["residual"] = np.abs(frame["pushforward"] - frame["distribution"])
    ok = report.invariant and report.consistent
    return CommandResult(
        EXIT_OK if ok else EXIT_FAILED,
        table=frame,
        report=report.model_dump(mode="json"),
    )


@track_time(command_duration_seconds, command="orbit")
def cmd_orbit(config: ExperimentConfig, options: RunOptions) -> CommandResult:
    ifs = build_ifs(config)
    if config.run.x0 is None:
        raise ConfigurationError("orbit runs need run.x0")
    stats = simulate_orbit(
        ifs, np.asarray(config.run.x0).reshape(ifs.shape.dims), config.run.steps,
        config.run.orbit_grid, config.run.arithmetic
    )
    dims = ifs.shape.size
    frame = pd.DataFrame(cell_labels(stats.grid, dims), columns=[f"cell{l}" for l in range(dims)])
    frame["frequency"] = stats.frequencies
    trajectory = pd.DataFrame(stats.trajectory, columns=[f"x{l}" for l in range(dims)])
    trajectory.insert(0, "step", np.arange(len(trajectory)))
    report = stats.model_dump(mode="json", exclude={"trajectory"})
    return CommandResult(EXIT_OK, table=frame, report=report, extra_tables={"trajectory": trajectory})


@track_time(command_duration_seconds, command="admissible")
def cmd_admissible(config: ExperimentConfig, options: RunOptions) -> CommandResult:
    ifs = build_ifs(config)
    budget = options.budget if options.budget is not None else settings.admissible_budget
    points = minimal_admissible_points(ifs, config.run.depth, budget)
    frame = _coordinate_frame(points)
    report = {"system": ifs.name, "depth": config.run.depth, "points": len(points)}
    return CommandResult(EXIT_OK, table=frame, report=report)


COMMANDS: Dict[str, Callable[[ExperimentConfig, RunOptions], CommandResult]] = {
    "validate": cmd_validate,
    "iterate": cmd_iterate,
    "limit": cmd_limit,
    "fixed-point": cmd_fixed_point,
    "invariance": cmd_invariance,
    "orbit": cmd_orbit,
    "admissible": cmd_admissible,
}


def run_command(name: str, config: ExperimentConfig, options: RunOptions) -> CommandResult:
    if name not in COMMANDS:
        raise ConfigurationError(f"unknown command {name!r}")
    result = COMMANDS[name](config, options)
    logger.info("Command finished", command=name, exit_code=result.exit_code)
    return result
