"""Discrete adjoint gradients for chunked backward and forward Euler.

The adjoint is derived from the discrete scheme itself, so the gradient is
the exact derivative of the computed trajectory (up to the Newton
tolerance) rather than a discretization of the continuous adjoint ODE.

For backward Euler, ``y_i = y_{i-1} + h(y_i, t_i) dt_i``.  With ``lam`` the
adjoint carried into step ``i`` (zero past the last step), each step back

1. applies the observation jump ``lam_hat = lam + dL/dy_i``,
2. solves ``(I - j_i dt_i)^T mu_i = lam_hat`` with ``j_i = dh/dy(y_i, t_i)``,
3. adds ``mu_i^T dh/dp(y_i, t_i) dt_i`` to the gradient,

and hands ``mu_i`` on as the adjoint for step ``i - 1``.  Over a chunk the
solves couple into one block-bidiagonal system in reversed time, solved with
the same solver as the forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from chunkode import linalg
from chunkode.integrate import (
    NewtonSettings,
    chunk_bounds,
    integrate,
    resolve_solver,
)
from chunkode.model import JacobianStrategy, jacobian_state, param_step, parameter_vjp

#: Largest parameter count the finite-difference oracle accepts.
FD_PARAM_LIMIT = 500

#: Newton settings used by the finite-difference oracle; loose tolerances
#: would be amplified by ``1 / step``.
FD_NEWTON = NewtonSettings(tol_a=1e-13, tol_r=1e-12, max_iter=100)


@dataclass
class AdjointState:
    """Adjoint ``lam`` of shape ``(n_batch, n_size)`` and the gradient accumulated so far."""

    lam: np.ndarray
    grad_accum: np.ndarray

    @classmethod
    def terminal(cls, n_batch, n_size, n_params):
        return cls(np.zeros((n_batch, n_size)), np.zeros(n_params))


@dataclass(frozen=True)
class LossSpec:
    """A scalar loss of a trajectory and its gradient with respect to every state.

    ``state_gradient_fn`` returns an array shaped like ``traj.states``; row 0
    (the initial condition) is ignored.
    """

    value_fn: Callable
    state_gradient_fn: Callable

    def evaluate(self, traj):
        return float(self.value_fn(traj)), np.asarray(self.state_gradient_fn(traj), dtype=np.float64)


def loss_frobenius(traj):
    """Root of the sum of squares of all states after the initial condition.

    Returns ``(L, dL/dy)``; the gradient is ``y / L`` and is taken as 0 when
    ``L == 0``.
    """
    y = traj.states[1:]
    value = float(np.sqrt(np.sum(y * y)))
    grad = np.zeros_like(traj.states)
    if value > 0.0:
        grad[1:] = y / value
    return value, grad


FROBENIUS = LossSpec(
    value_fn=lambda traj: loss_frobenius(traj)[0],
    state_gradient_fn=lambda traj: loss_frobenius(traj)[1],
)


def _lhs_blocks(j, dts):
    # (I - j dt)^T for a stack of Jacobians
    n = j.shape[-1]
    return (np.eye(n) - j * dts[..., None, None]).swapaxes(-1, -2)


def adjoint_step_sequential(model, y_i, t_i, dt_i, lam, dldy_i, strategy=JacobianStrategy.ANALYTIC):
    """One backward Euler adjoint step from ``i`` to ``i - 1``.

    Parameters
    ----------
    y_i, t_i, dt_i : ndarray
        Converged state ``(n_batch, n_size)``, its time and the step size
        ``t_i - t_{i-1}`` (both ``(n_batch,)``).
    lam : ndarray
        Adjoint carried into step ``i``.
    dldy_i : ndarray
        Observation jump ``dL/dy_i``.

    Returns
    -------
    lam_prev : ndarray
        Adjoint carried into step ``i - 1``.
    g : ndarray
        Gradient increment ``lam_prev^T dh/dp(y_i, t_i) dt_i``.
    """
    y = y_i[None]
    t = np.asarray(t_i, dtype=np.float64)[None]
    dt = np.asarray(dt_i, dtype=np.float64)[None]
    j = jacobian_state(model, t, y, strategy)
    n = model.n_size
    system = linalg.BlockBidiagonalSystem(_lhs_blocks(j, dt), np.empty((0,) + j.shape[1:]))
    lam_hat = lam + dldy_i
    mu = linalg.solve_thomas(system, lam_hat[None])
    g = parameter_vjp(model, t, y, mu * dt[..., None])
    return mu[0], g


def adjoint_chunk_solve(model, states, times, dts, lam_end, dldy, solver="thomas", strategy=JacobianStrategy.ANALYTIC):
    """Adjoint over one chunk of backward Euler steps.

    ``states``, ``times``, ``dts`` and ``dldy`` cover the chunk's steps in
    forward order.  Writing ``mu_i = lam_end + d_k`` with ``k`` counting
    back from the last step gives the system

        (I - j_i dt_i)^T d_k - d_{k-1} = dL/dy_i + (j_i dt_i)^T lam_end

    with ``d_{-1} = 0``, block lower-bidiagonal in ``k``.

    Returns
    -------
    mu : ndarray
        Adjoint after each step's solve, in forward order ``(n, n_batch, n_size)``.
        ``mu[0]`` is carried into the previous chunk.
    g : ndarray
        The chunk's gradient contribution.
    """
    solve = resolve_solver(solver)
    j = jacobian_state(model, times, states, strategy)
    jdt = j * dts[..., None, None]
    diag = _lhs_blocks(j, dts)[::-1]
    nc, nb, n = states.shape
    offdiag = np.broadcast_to(-np.eye(n), (nc - 1, nb, n, n))
    rhs = dldy + np.einsum("cbji,bj->cbi", jdt, lam_end)
    d = solve(linalg.BlockBidiagonalSystem(diag, offdiag), rhs[::-1])
    mu = lam_end + d[::-1]
    g = parameter_vjp(model, times, states, mu * dts[..., None])
    return mu, g


def _backward_scheme_adjoint(model, traj, dldy, n_chunk, solver, strategy, sequential):
    states, times, dts = traj.states, traj.grid.times, traj.grid.dt
    state = AdjointState.terminal(traj.grid.n_batch, model.n_size, model.n_params)
    for lo, hi in reversed(chunk_bounds(traj.grid.n_time, n_chunk)):
        if sequential:
            for i in range(hi, lo, -1):
                state.lam, g = adjoint_step_sequential(
                    model, states[i], times[i], dts[i - 1], state.lam, dldy[i], strategy
                )
                state.grad_accum += g
            continue
        mu, g = adjoint_chunk_solve(
            model,
            states[lo + 1 : hi + 1],
            times[lo + 1 : hi + 1],
            dts[lo:hi],
            state.lam,
            dldy[lo + 1 : hi + 1],
            solver,
            strategy,
        )
        state.lam = mu[0]
        state.grad_accum += g
    return state


def _forward_scheme_adjoint(model, traj, dldy, n_chunk, strategy):
    # y_i = y_{i-1} + h(y_{i-1}, t_{i-1}) dt_i: mu_i = dL/dy_i + (I + j_i dt_{i+1})^T mu_{i+1}
    states, times, dts = traj.states, traj.grid.times, traj.grid.dt
    state = AdjointState.terminal(traj.grid.n_batch, model.n_size, model.n_params)
    for lo, hi in reversed(chunk_bounds(traj.grid.n_time, n_chunk)):
        # Jacobians at the states each step starts from, one call per chunk
        j = jacobian_state(model, times[lo:hi], states[lo:hi], strategy)
        mu = np.empty((hi - lo,) + state.lam.shape)
        lam = state.lam
        for k in range(hi - lo - 1, -1, -1):
            mu[k] = lam + dldy[lo + k + 1]
            lam = mu[k] + np.einsum("bji,bj->bi", j[k], mu[k]) * dts[lo + k][:, None]
        state.lam = lam
        state.grad_accum += parameter_vjp(model, times[lo:hi], states[lo:hi], mu * dts[lo:hi, :, None])
    return state


def adjoint_backward(
    model,
    traj,
    dldy,
    n_chunk=1,
    scheme="backward",
    solver="thomas",
    strategy=JacobianStrategy.ANALYTIC,
    n_switch=1,
    sequential=False,
):
    """Gradient of a loss with state gradient ``dldy`` along a stored trajectory.

    ``sequential=True`` marches one step at a time with
    :func:`adjoint_step_sequential` instead of solving each chunk at once.
    Returns the final :class:`AdjointState`.
    """
    dldy = np.asarray(dldy, dtype=np.float64)
    if dldy.shape != traj.states.shape:
        raise ValueError(f"dL/dy shape {dldy.shape} does not match states {traj.states.shape}")
    if scheme == "backward":
        return _backward_scheme_adjoint(
            model, traj, dldy, n_chunk, resolve_solver(solver, n_switch), strategy, sequential
        )
    if scheme == "forward":
        return _forward_scheme_adjoint(model, traj, dldy, n_chunk, strategy)
    raise ValueError(f"unknown integration scheme {scheme!r}")


def gradient_adjoint(
    model,
    y0,
    grid,
    n_chunk=1,
    loss=FROBENIUS,
    scheme="backward",
    solver="thomas",
    strategy=JacobianStrategy.ANALYTIC,
    settings=None,
    n_switch=1,
    sequential=False,
):
    """Integrate forward, then return ``(L, dL/dp)`` from the adjoint pass."""
    options = {}
    if scheme == "backward":
        options = dict(settings=settings, solver=solver, strategy=strategy, n_switch=n_switch)
    traj = integrate(model, y0, grid, n_chunk, scheme, **options)
    value, dldy = loss.evaluate(traj)
    state = adjoint_backward(model, traj, dldy, n_chunk, scheme, solver, strategy, n_switch, sequential)
    return value, state.grad_accum


def gradient_fd_oracle(model, y0, grid, loss=FROBENIUS, scheme="backward", n_chunk=1, settings=FD_NEWTON):
    """Central differences of the full integration and loss over every parameter.

    The step for parameter ``p_k`` is ``1e-6 |p_k|`` (``1e-6`` when it is
    zero); see :func:`chunkode.model.param_step`.
    """
    p = model.params
    if p.size > FD_PARAM_LIMIT:
        raise ValueError(f"{p.size} parameters exceed the oracle limit of {FD_PARAM_LIMIT}")
    options = {"settings": settings} if scheme == "backward" else {}

    def value(params):
        traj = integrate(model.with_params(params), y0, grid, n_chunk, scheme, **options)
        return loss.evaluate(traj)[0]

    g = np.empty(p.size)
    for k in range(p.size):
        step = param_step(p[k])
        pp = p.copy()
        pm = p.copy()
        pp[k] += step
        pm[k] -= step
        g[k] = (value(pp) - value(pm)) / (pp[k] - pm[k])
    return g
