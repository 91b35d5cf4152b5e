"""ODE models ``dy/dt = h(y, t; p)`` evaluated over two batch axes.

Every model function takes times of shape ``(n_chunk, n_batch)`` and states
of shape ``(n_chunk, n_batch, n_size)``: one axis over independent series and
one over consecutive time steps.  Parameters are a flat vector ``p``; rate
functions must accept it either as an array or as a :class:`~chunkode.dual.Dual`
so parameter sensitivities come for free.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from chunkode.dual import Dual

#: Relative step for central finite differences, ``delta = FD_EPS * (1 + |x|)``.
FD_EPS = 1e-6

# parameter tangent slots propagated per dual pass
_PARAM_BLOCK = 64


class ShapeMismatch(ValueError):
    pass


class StrategyUnavailable(ValueError):
    pass


class NonFiniteOutput(FloatingPointError):
    pass


class JacobianStrategy(enum.Enum):
    ANALYTIC = "analytic"
    FORWARD_AD = "forward_ad"
    FINITE_DIFFERENCE = "finite_difference"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(
                f"unknown Jacobian strategy {value!r}; choose from {[s.value for s in cls]}"
            ) from None


@dataclass(frozen=True)
class OdeModel:
    """An ODE definition with optional analytic derivatives.

    Attributes
    ----------
    n_size : int
        State dimension.
    params : ndarray
        Flat parameter vector; ``segments`` names its slices.
    rate_fn : callable
        ``rate_fn(t, y, p) -> ydot``.
    jacobian_fn : callable, optional
        ``jacobian_fn(t, y, p) -> dh/dy`` with shape ``(..., n_size, n_size)``.
    param_vjp_fn : callable, optional
        ``param_vjp_fn(t, y, p, w) -> sum(w * dh/dp)`` with the shape of ``p``.
    supports_dual : bool
        Whether ``rate_fn`` can be evaluated on dual numbers.
    """

    n_size: int
    params: np.ndarray
    rate_fn: Callable
    jacobian_fn: Optional[Callable] = None
    param_vjp_fn: Optional[Callable] = None
    segments: dict = field(default_factory=dict)
    name: str = "ode"
    supports_dual: bool = True

    def __post_init__(self):
        object.__setattr__(self, "params", np.asarray(self.params, dtype=np.float64).ravel())

    @property
    def n_params(self):
        return self.params.size

    def with_params(self, params):
        return replace(self, params=np.asarray(params, dtype=np.float64))

    def param(self, name):
        """Named slice of the parameter vector."""
        return self.params[self.segments[name]]


def _check(model, t, y):
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1:] != (model.n_size,) or t.shape != y.shape[:-1]:
        raise ShapeMismatch(
            f"expected t of shape S and y of shape S + ({model.n_size},); "
            f"got t {t.shape}, y {y.shape}"
        )
    return t, y


def _finite(x, what):
    if not np.all(np.isfinite(x)):
        raise NonFiniteOutput(f"non-finite values in {what}")
    return x


def _rate(model, t, y, p):
    out = model.rate_fn(t, y, p)
    if isinstance(out, Dual):
        return out
    return np.broadcast_to(out, y.shape)


def rate(model, t, y):
    """Evaluate ``h(y, t; p)`` over the whole ``(chunk, batch)`` grid."""
    t, y = _check(model, t, y)
    out = np.asarray(_rate(model, t, y, model.params), dtype=np.float64)
    if out.shape != y.shape:
        raise ShapeMismatch(f"rate returned shape {out.shape}, expected {y.shape}")
    return out


def jacobian_state(model, t, y, strategy=JacobianStrategy.ANALYTIC):
    """``dh/dy`` with shape ``(n_chunk, n_batch, n_size, n_size)``."""
    t, y = _check(model, t, y)
    strategy = JacobianStrategy.parse(strategy)
    if strategy is JacobianStrategy.ANALYTIC:
        if model.jacobian_fn is None:
            raise StrategyUnavailable(f"model {model.name!r} has no analytic Jacobian")
        j = np.broadcast_to(model.jacobian_fn(t, y, model.params), y.shape + (model.n_size,))
        return _finite(np.array(j, dtype=np.float64), "analytic Jacobian")
    if strategy is JacobianStrategy.FORWARD_AD:
        if not model.supports_dual:
            raise StrategyUnavailable(f"model {model.name!r} cannot be evaluated on dual numbers")
        out = model.rate_fn(t, Dual.seed(y), model.params)
        if not isinstance(out, Dual):
            return np.zeros(y.shape + (model.n_size,))
        j = np.broadcast_to(out.tangent, y.shape + (model.n_size,))
        return _finite(np.array(j), "forward-mode Jacobian")
    return _finite(_fd_jacobian(model, t, y), "finite-difference Jacobian")


def _fd_jacobian(model, t, y):
    j = np.empty(y.shape + (model.n_size,))
    for k in range(model.n_size):
        step = FD_EPS * (1.0 + np.abs(y[..., k]))
        yp = y.copy()
        ym = y.copy()
        yp[..., k] += step
        ym[..., k] -= step
        hp = _rate(model, t, yp, model.params)
        hm = _rate(model, t, ym, model.params)
        j[..., k] = (hp - hm) / ((yp[..., k] - ym[..., k])[..., None])
    return j


def param_step(value):
    """Central-difference step for a parameter: relative to its magnitude.

    Parameters span many decades (masses of 1e-7 next to stiffnesses of 1),
    so an absolute floor would swamp the small ones.
    """
    return FD_EPS * (abs(value) if value != 0.0 else 1.0)


def parameter_vjp(model, t, y, w):
    """``sum over chunk, batch, state of w * dh/dp``, shaped like ``p``.

    Uses the model's analytic routine if it has one, dual numbers seeded on
    blocks of parameters if the rate function supports them, and central
    differences over ``p`` otherwise.
    """
    t, y = _check(model, t, y)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != y.shape:
        raise ShapeMismatch(f"w shape {w.shape} does not match y {y.shape}")
    p = model.params
    if model.param_vjp_fn is not None:
        g = np.asarray(model.param_vjp_fn(t, y, p, w), dtype=np.float64)
    elif model.supports_dual:
        g = np.zeros(p.size)
        for lo in range(0, p.size, _PARAM_BLOCK):
            hi = min(lo + _PARAM_BLOCK, p.size)
            tangent = np.zeros((p.size, hi - lo))
            tangent[lo:hi] = np.eye(hi - lo)
            out = model.rate_fn(t, y, Dual(p, tangent))
            if isinstance(out, Dual):
                tangents = np.broadcast_to(out.tangent, y.shape + (hi - lo,))
                g[lo:hi] = w.ravel() @ tangents.reshape(-1, hi - lo)
    else:
        g = np.empty(p.size)
        for k in range(p.size):
            step = param_step(p[k])
            pp = p.copy()
            pm = p.copy()
            pp[k] += step
            pm[k] -= step
            diff = _rate(model, t, y, pp) - _rate(model, t, y, pm)
            g[k] = np.sum(w * diff) / (pp[k] - pm[k])
    return _finite(g, "parameter sensitivity")
