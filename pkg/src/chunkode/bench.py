"""Timing-study harness: run trials, sweep grids, write CSV.

One trial integrates a benchmark problem over ``n_time`` equal steps on
``[0, t_max]``, evaluates the Frobenius loss and optionally its parameter
gradient, timing the forward and backward phases separately.  Each trial is
run once unmeasured and then ``repeats`` times; the CSV gets one row per
repeat plus a row with ``repeat = mean``.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import itertools
import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from chunkode import models
from chunkode.adjoint import FROBENIUS, adjoint_backward, gradient_fd_oracle
from chunkode.integrate import TimeGrid, integrate

PROBLEMS = tuple(models.PROBLEMS)
JACOBIANS = ("analytic", "forward_ad", "finite_difference")
GRADIENTS = ("adjoint", "fd_oracle", "none")
SOLVERS = ("thomas", "pcr", "hybrid")
INTEGRATIONS = ("backward", "forward")

CSV_COLUMNS = (
    "problem",
    "n_unit",
    "n_size",
    "n_batch",
    "n_time",
    "n_chunk",
    "jacobian",
    "gradient",
    "solver",
    "integration",
    "repeat",
    "forward_s",
    "backward_s",
    "total_s",
    "loss",
    "grad_norm",
    "newton_iterations",
    "rate_evals",
    "jacobian_evals",
    "linear_solves",
    "status",
)


class GridError(ValueError):
    """Malformed grid file or trial configuration."""


@dataclass(frozen=True)
class TrialConfig:
    problem: str
    n_unit: int
    n_batch: int
    n_time: int
    n_chunk: int
    jacobian: str = "analytic"
    gradient: str = "adjoint"
    solver: str = "thomas"
    n_switch: int = 1
    integration: str = "backward"
    repeats: int = 3
    seed: int = 7
    t_max: float | None = None

    def __post_init__(self):
        choices = {
            "problem": PROBLEMS,
            "jacobian": JACOBIANS,
            "gradient": GRADIENTS,
            "solver": SOLVERS,
            "integration": INTEGRATIONS,
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise GridError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.n_unit < 1 or self.n_batch < 1 or self.n_time < 1:
            raise GridError("n_unit, n_batch and n_time must be positive")
        if not 1 <= self.n_chunk <= self.n_time:
            raise GridError(f"need 1 <= n_chunk <= n_time, got {self.n_chunk} and {self.n_time}")
        if self.repeats < 1:
            raise GridError("repeats must be at least 1")
        if self.n_switch < 0:
            raise GridError("n_switch must be non-negative")
        if self.t_max is not None and not self.t_max > 0:
            raise GridError("t_max must be positive")

    @property
    def final_time(self):
        return self.t_max if self.t_max is not None else models.default_t_max(self.problem)


@dataclass
class TrialRecord:
    config: TrialConfig
    repeat: int | str
    n_size: int = 0
    forward_seconds: float = 0.0
    backward_seconds: float = 0.0
    total_seconds: float = 0.0
    loss_value: float = math.nan
    grad_norm: float = math.nan
    newton_iterations: int = 0
    rate_evals: int = 0
    jacobian_evals: int = 0
    linear_solves: int = 0
    status: str = "ok"

    def csv_row(self):
        c = self.config
        return [
            c.problem,
            c.n_unit,
            self.n_size,
            c.n_batch,
            c.n_time,
            c.n_chunk,
            c.jacobian,
            c.gradient,
            c.solver,
            c.integration,
            self.repeat,
            repr(float(self.forward_seconds)),
            repr(float(self.backward_seconds)),
            repr(float(self.total_seconds)),
            repr(float(self.loss_value)),
            repr(float(self.grad_norm)),
            self.newton_iterations,
            self.rate_evals,
            self.jacobian_evals,
            self.linear_solves,
            self.status,
        ]


def setup_trial(config):
    """Model, initial state and time grid for ``config``."""
    model = models.build(config.problem, config.n_unit, config.n_batch, seed=config.seed)
    y0 = models.initial_state(model, config.n_batch)
    grid = TimeGrid.uniform(config.final_time, config.n_time, config.n_batch)
    return model, y0, grid


def _integrate(config, model, y0, grid):
    options = {}
    if config.integration == "backward":
        options = dict(solver=config.solver, strategy=config.jacobian, n_switch=config.n_switch)
    return integrate(model, y0, grid, config.n_chunk, config.integration, **options)


def _measure(config, model, y0, grid, repeat):
    record = TrialRecord(config, repeat, n_size=model.n_size)
    start = time.perf_counter()
    traj = _integrate(config, model, y0, grid)
    loss, dldy = FROBENIUS.evaluate(traj)
    mid = time.perf_counter()
    grad = None
    if config.gradient == "adjoint":
        grad = adjoint_backward(
            model,
            traj,
            dldy,
            config.n_chunk,
            config.integration,
            config.solver,
            config.jacobian,
            config.n_switch,
        ).grad_accum
    elif config.gradient == "fd_oracle":
        grad = gradient_fd_oracle(model, y0, grid, FROBENIUS, config.integration, config.n_chunk)
    end = time.perf_counter()
    record.forward_seconds = mid - start
    record.backward_seconds = end - mid if grad is not None else 0.0
    record.total_seconds = record.forward_seconds + record.backward_seconds
    record.loss_value = loss
    record.grad_norm = float(np.linalg.norm(grad)) if grad is not None else math.nan
    work = traj.work
    record.newton_iterations = work.newton_iterations
    record.rate_evals = work.rate_evals
    record.jacobian_evals = work.jacobian_evals
    record.linear_solves = work.linear_solves
    if not math.isfinite(loss):
        record.status = "failed: non-finite loss"
    return record


def _failed(config, repeat, n_size, exc):
    return TrialRecord(config, repeat, n_size=n_size, status=f"failed: {type(exc).__name__}: {exc}")


def run_trial(config):
    """Warm up once, run ``config.repeats`` measured repeats, append the mean row.

    Failures are recorded in ``status`` rather than raised.
    """
    try:
        model, y0, grid = setup_trial(config)
    except Exception as exc:  # noqa: BLE001 - recorded, not fatal to a sweep
        return [_failed(config, "mean", 0, exc)]
    records = []
    try:
        _measure(config, model, y0, grid, "warmup")
        for r in range(config.repeats):
            records.append(_measure(config, model, y0, grid, r))
    except Exception as exc:  # noqa: BLE001
        records.append(_failed(config, len(records), model.n_size, exc))
        mean = _failed(config, "mean", model.n_size, exc)
        return records + [mean]
    mean = dataclasses.replace(records[-1], repeat="mean")
    for name in ("forward_seconds", "backward_seconds", "total_seconds"):
        setattr(mean, name, sum(getattr(r, name) for r in records) / len(records))
    if any(r.status != "ok" for r in records):
        mean.status = next(r.status for r in records if r.status != "ok")
    return records + [mean]


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrialConfig)}
_REQUIRED = ("problem", "n_unit", "n_batch", "n_time", "n_chunk")


def _convert(key, text):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise GridError(f"bad value {text!r} for {key}") from None
    return text


def parse_grid(text):
    """Parse ``key = v1, v2`` lines into a dict of value lists.

    Blank lines and ``#`` comments are ignored; keys are :class:`TrialConfig`
    field names.
    """
    grid = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, values = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise GridError(f"line {lineno}: expected 'key = v1, v2, ...'")
        if key not in _FIELD_TYPES:
            raise GridError(f"line {lineno}: unknown key {key!r}")
        if key in grid:
            raise GridError(f"line {lineno}: duplicate key {key!r}")
        items = [v.strip() for v in values.split(",")]
        if not all(items):
            raise GridError(f"line {lineno}: empty value for {key!r}")
        grid[key] = [_convert(key, v) for v in items]
    return grid


def expand_grid(grid):
    """Cartesian product of a parsed grid as :class:`TrialConfig` objects.

    An empty grid expands to no trials.
    """
    if not grid:
        return []
    missing = [k for k in _REQUIRED if k not in grid]
    if missing:
        raise GridError(f"grid is missing required keys {missing}")
    keys = list(grid)
    return [TrialConfig(**dict(zip(keys, combo))) for combo in itertools.product(*grid.values())]


def csv_writer(stream):
    return csv.writer(stream, lineterminator="\n")


def run_study(configs, stream, parallel=False, max_workers=None):
    """Run every configuration, streaming rows to ``stream`` as trials finish.

    With ``parallel=True`` trials run in worker processes; rows keep the
    grid order and values stay deterministic, but timings are unreliable.
    Returns all records.
    """
    writer = csv_writer(stream)
    writer.writerow(CSV_COLUMNS)
    records = []
    if parallel:
        warnings.warn("parallel trials share the CPU; timings are not reliable", RuntimeWarning, stacklevel=2)
        with concurrent.futures.ProcessPoolExecutor(max_workers=max_workers) as pool:
            results = pool.map(run_trial, configs)
            for rows in results:
                _emit(writer, stream, rows, records)
    else:
        for config in configs:
            _emit(writer, stream, run_trial(config), records)
    return records


def _emit(writer, stream, rows, records):
    for record in rows:
        writer.writerow(record.csv_row())
    stream.flush()
    records.extend(rows)


def dump_trajectory(config, stream):
    """Write the integrated trajectory as ``time,batch,component,value`` rows."""
    model, y0, grid = setup_trial(config)
    traj = _integrate(config, model, y0, grid)
    writer = csv_writer(stream)
    writer.writerow(("time", "batch", "component", "value"))
    n_time1, n_batch, n_size = traj.states.shape
    for i in range(n_time1):
        for b in range(n_batch):
            t = repr(float(grid.times[i, b]))
            for k in range(n_size):
                writer.writerow((t, b, k, repr(float(traj.states[i, b, k]))))
    return traj
