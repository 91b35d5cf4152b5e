"""Chunked forward and backward Euler time integration.

Backward Euler advances ``n_chunk`` steps at a time.  Writing the states in
a chunk as increments ``y_{i+k} = y_i + dy_k`` from the chunk start, the
implicit equations for all ``k`` are solved together by Newton's method; the
Newton matrix is block lower-bidiagonal with diagonal blocks
``I - j(y_i + dy_k) dt_k`` and ``-I`` below the diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from chunkode import linalg
from chunkode.model import JacobianStrategy, NonFiniteOutput, jacobian_state, rate


class NewtonDivergence(RuntimeError):
    """Newton iterations on a chunk failed to converge."""

    def __init__(self, message, batch_index=None, norm=None, initial_norm=None, time_index=None):
        self.batch_index = batch_index
        self.norm = norm
        self.initial_norm = initial_norm
        self.time_index = time_index
        super().__init__(message)


@dataclass(frozen=True)
class TimeGrid:
    """Per-batch time points, shape ``(n_time + 1, n_batch)``, starting at ``t_0``."""

    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        if times.ndim == 1:
            times = times[:, None]
        if times.ndim != 2 or times.shape[0] < 2:
            raise ValueError("times must have shape (n_time + 1, n_batch) with n_time >= 1")
        if not np.all(np.isfinite(times)) or np.any(np.diff(times, axis=0) <= 0.0):
            raise ValueError("times must be finite and strictly increasing")
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, t_max, n_time, n_batch, t_start=0.0):
        """``n_time`` equal steps over ``[t_start, t_max]`` for every batch."""
        t = np.linspace(t_start, t_max, n_time + 1)
        return cls(np.repeat(t[:, None], n_batch, axis=1))

    @property
    def n_time(self):
        return self.times.shape[0] - 1

    @property
    def n_batch(self):
        return self.times.shape[1]

    @property
    def dt(self):
        """Step sizes, ``dt[i] = t[i + 1] - t[i]``, shape ``(n_time, n_batch)``."""
        return np.diff(self.times, axis=0)


@dataclass(frozen=True)
class NewtonSettings:
    tol_a: float = 1e-8
    tol_r: float = 1e-6
    max_iter: int = 100

    def __post_init__(self):
        if self.tol_a <= 0 or self.tol_r <= 0:
            raise ValueError("Newton tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class WorkCounters:
    chunks: int = 0
    newton_iterations: int = 0
    rate_evals: int = 0
    jacobian_evals: int = 0
    linear_solves: int = 0


@dataclass
class Trajectory:
    """States ``(n_time + 1, n_batch, n_size)`` on ``grid``; ``states[0]`` is the initial condition."""

    states: np.ndarray
    grid: TimeGrid
    work: WorkCounters = field(default_factory=WorkCounters)

    @property
    def times(self):
        return self.grid.times


def resolve_solver(solver, n_switch=1):
    """Accept a solver name or a ``solve(system, rhs)`` callable."""
    if callable(solver):
        return solver
    return linalg.get_solver(solver, n_switch)


def chunk_residual(model, y_start, dy, chunk_times, chunk_dts):
    """Backward Euler residual of every step in a chunk.

    Row ``k`` is ``dy_k - dy_{k-1} - h(y_start + dy_k, t_k) dt_k`` with
    ``dy_{-1} = 0``; one rate evaluation covers the whole chunk.
    """
    dy = np.asarray(dy, dtype=np.float64)
    h = rate(model, chunk_times, y_start[None] + dy)
    r = dy - h * chunk_dts[..., None]
    r[1:] -= dy[:-1]
    if not np.all(np.isfinite(r)):
        raise NonFiniteOutput("non-finite chunk residual")
    return r


def chunk_jacobian(model, y_start, dy, chunk_times, chunk_dts, strategy=JacobianStrategy.ANALYTIC):
    """Newton matrix of :func:`chunk_residual` as a block-bidiagonal system."""
    j = jacobian_state(model, chunk_times, y_start[None] + dy, strategy)
    n = model.n_size
    diag = np.eye(n) - j * chunk_dts[..., None, None]
    nc, nb = chunk_dts.shape
    offdiag = np.broadcast_to(-np.eye(n), (nc - 1, nb, n, n))
    return linalg.BlockBidiagonalSystem(diag, offdiag)


def _norms(r):
    # Euclidean norm per batch over the flattened (chunk, size) residual
    return np.sqrt(np.einsum("cbi,cbi->b", r, r))


def _converged(norm, norm0, settings):
    rel = np.where(norm0 > 0.0, norm / np.where(norm0 > 0.0, norm0, 1.0), 0.0)
    return bool(np.all((norm <= settings.tol_a) | (rel <= settings.tol_r)))


def newton_solve_chunk(
    model,
    y_start,
    chunk_times,
    chunk_dts,
    settings=None,
    solver="thomas",
    strategy=JacobianStrategy.ANALYTIC,
    work=None,
):
    """Solve one chunk of backward Euler steps from ``dy = 0``.

    Iterates until every batch entry meets the absolute or the relative
    tolerance.  Returns ``(dy, iterations)``.

    Raises
    ------
    NewtonDivergence
        After ``max_iter`` iterations or on a non-finite residual.
    """
    settings = settings or NewtonSettings()
    solve = resolve_solver(solver)
    work = work if work is not None else WorkCounters()
    y_start = np.asarray(y_start, dtype=np.float64)
    dy = np.zeros(chunk_dts.shape + (model.n_size,))
    r = chunk_residual(model, y_start, dy, chunk_times, chunk_dts)
    work.rate_evals += 1
    norm0 = _norms(r)
    norm = norm0
    iterations = 0
    while not _converged(norm, norm0, settings):
        if iterations >= settings.max_iter:
            worst = int(np.argmax(norm / np.where(norm0 > 0, norm0, 1.0)))
            raise NewtonDivergence(
                f"Newton did not converge in {settings.max_iter} iterations "
                f"(batch {worst}: |r| = {norm[worst]:.3e}, |r0| = {norm0[worst]:.3e})",
                batch_index=worst,
                norm=float(norm[worst]),
                initial_norm=float(norm0[worst]),
            )
        system = chunk_jacobian(model, y_start, dy, chunk_times, chunk_dts, strategy)
        work.jacobian_evals += 1
        dy = dy - solve(system, r)
        work.linear_solves += 1
        iterations += 1
        try:
            r = chunk_residual(model, y_start, dy, chunk_times, chunk_dts)
        except (NonFiniteOutput, FloatingPointError) as exc:
            raise NewtonDivergence(f"non-finite residual after {iterations} iterations") from exc
        work.rate_evals += 1
        norm = _norms(r)
    work.newton_iterations += iterations
    return dy, iterations


def chunk_bounds(n_time, n_chunk):
    """``(start, stop)`` step ranges; the last chunk may be shorter."""
    if not 1 <= n_chunk <= n_time:
        raise ValueError(f"need 1 <= n_chunk <= n_time, got n_chunk={n_chunk}, n_time={n_time}")
    return [(i, min(i + n_chunk, n_time)) for i in range(0, n_time, n_chunk)]


def _initial(y0, grid, n_size):
    y0 = np.asarray(y0, dtype=np.float64)
    if y0.shape != (grid.n_batch, n_size):
        raise ValueError(f"y0 must have shape {(grid.n_batch, n_size)}, got {y0.shape}")
    states = np.empty((grid.n_time + 1, grid.n_batch, n_size))
    states[0] = y0
    return states


def integrate_backward_euler(
    model,
    y0,
    grid,
    n_chunk=1,
    settings=None,
    solver="thomas",
    strategy=JacobianStrategy.ANALYTIC,
    n_switch=1,
):
    """Chunked backward Euler over ``grid`` from ``y0`` of shape ``(n_batch, n_size)``."""
    settings = settings or NewtonSettings()
    solve = resolve_solver(solver, n_switch)
    states = _initial(y0, grid, model.n_size)
    dts = grid.dt
    work = WorkCounters()
    for lo, hi in chunk_bounds(grid.n_time, n_chunk):
        try:
            dy, _ = newton_solve_chunk(
                model, states[lo], grid.times[lo + 1 : hi + 1], dts[lo:hi], settings, solve, strategy, work
            )
        except NewtonDivergence as exc:
            exc.time_index = lo
            exc.args = (f"{exc.args[0]} in the chunk starting at step {lo}",)
            raise
        states[lo + 1 : hi + 1] = states[lo] + dy
        work.chunks += 1
    return Trajectory(states, grid, work)


def integrate_forward_euler(model, y0, grid, n_chunk=1):
    """Explicit Euler, ``y_{i+1} = y_i + h(y_i, t_i) dt_{i+1}``.

    Each step needs the previous one, so there is nothing to group within a
    chunk and the result does not depend on ``n_chunk``; the argument only
    sets the chunk count in the work counters.

    Raises
    ------
    NonFiniteOutput
        When the recurrence overflows; ``exc.step`` is the offending step.
    """
    states = _initial(y0, grid, model.n_size)
    dts = grid.dt
    work = WorkCounters(chunks=len(chunk_bounds(grid.n_time, n_chunk)))
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(grid.n_time):
            h = rate(model, grid.times[i][None], states[i][None])[0]
            states[i + 1] = states[i] + h * dts[i][:, None]
            work.rate_evals += 1
            if not np.all(np.isfinite(states[i + 1])):
                exc = NonFiniteOutput(f"forward Euler produced non-finite state at step {i + 1}")
                exc.step = i + 1
                raise exc
    return Trajectory(states, grid, work)


def integrate(model, y0, grid, n_chunk=1, scheme="backward", **options):
    """Dispatch to :func:`integrate_backward_euler` or :func:`integrate_forward_euler`."""
    if scheme == "backward":
        return integrate_backward_euler(model, y0, grid, n_chunk, **options)
    if scheme == "forward":
        return integrate_forward_euler(model, y0, grid, n_chunk)
    raise ValueError(f"unknown integration scheme {scheme!r}")
