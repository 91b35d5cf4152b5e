"""Vectorized forward-mode dual numbers.

A :class:`Dual` carries a value array of shape ``S`` and a tangent array of
shape ``S + (k,)``: ``k`` independent directional derivatives propagated
together.  Arithmetic broadcasts like numpy on the value shape.

Model rate functions are written against the free functions below (``sin``,
``tanh``, ``absolute``, ...), which accept plain arrays as well, so one
definition serves both plain evaluation and differentiation.
"""

import numpy as np


class Dual:
    __slots__ = ("value", "tangent")

    # make numpy hand binary operators back to us
    __array_ufunc__ = None

    def __init__(self, value, tangent):
        self.value = np.asarray(value, dtype=np.float64)
        self.tangent = np.asarray(tangent, dtype=np.float64)

    @classmethod
    def seed(cls, value, axis_size=None):
        """Dual over the last axis of ``value`` with unit tangents.

        The result's tangent at ``[..., i, k]`` is ``delta_ik``.
        """
        value = np.asarray(value, dtype=np.float64)
        n = value.shape[-1] if axis_size is None else axis_size
        tangent = np.broadcast_to(np.eye(n), value.shape + (n,)).copy()
        return cls(value, tangent)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def n_tangent(self):
        return self.tangent.shape[-1]

    def __repr__(self):
        return f"Dual(shape={self.shape}, n_tangent={self.n_tangent})"

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        tkey = key + (slice(None),) if Ellipsis in key else key
        return Dual(self.value[key], self.tangent[tkey])

    def __neg__(self):
        return Dual(-self.value, -self.tangent)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.tangent + other.tangent)
        other = np.asarray(other)
        return Dual(self.value + other, _expand(self.tangent, self.value, other))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.value * other.value,
                self.tangent * other.value[..., None] + self.value[..., None] * other.tangent,
            )
        other = np.asarray(other)
        return Dual(self.value * other, self.tangent * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return self * reciprocal(other)
        other = np.asarray(other)
        return Dual(self.value / other, self.tangent / other[..., None])

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, exponent):
        return power(self, exponent)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        value = self.value.reshape(shape)
        return Dual(value, self.tangent.reshape(value.shape + (self.n_tangent,)))

    def sum(self, axis=None):
        if axis is None:
            axes = tuple(range(self.ndim))
        else:
            axes = tuple(a % self.ndim for a in np.atleast_1d(axis))
        return Dual(self.value.sum(axis=axes), self.tangent.sum(axis=axes))


def _expand(tangent, value, other):
    # tangent broadcast against a plain operand's shape
    shape = np.broadcast_shapes(value.shape, np.shape(other))
    return np.broadcast_to(tangent, shape + tangent.shape[-1:])


def value_of(x):
    return x.value if isinstance(x, Dual) else np.asarray(x)


def _chain(x, f, dfdx):
    """Elementwise function with derivative ``dfdx`` (both at ``x.value``)."""
    if isinstance(x, Dual):
        return Dual(f, x.tangent * dfdx[..., None])
    return f


def reciprocal(x):
    v = value_of(x)
    r = 1.0 / v
    return _chain(x, r, -r * r)


def sin(x):
    v = value_of(x)
    return _chain(x, np.sin(v), np.cos(v))


def cos(x):
    v = value_of(x)
    return _chain(x, np.cos(v), -np.sin(v))


def tanh(x):
    v = value_of(x)
    f = np.tanh(v)
    return _chain(x, f, 1.0 - f * f)


def absolute(x):
    """``|x|`` with derivative ``sign(x)`` (zero at the origin)."""
    v = value_of(x)
    return _chain(x, np.abs(v), np.sign(v))


def sign(x):
    """Piecewise constant; carries no derivative."""
    return np.sign(value_of(x))


def macaulay(x):
    """Positive part ``max(x, 0)``; derivative taken as 0 for ``x <= 0``."""
    v = value_of(x)
    return _chain(x, np.maximum(v, 0.0), (v > 0.0).astype(np.float64))


def power(x, exponent):
    """``x ** exponent`` for ``x >= 0`` or integral exponents.

    When the exponent is itself a :class:`Dual` its derivative term
    ``x**e * log(x)`` is taken as 0 where ``x == 0`` (the limit from above).
    """
    v = value_of(x)
    e = value_of(exponent)
    f = v**e
    if not isinstance(x, Dual) and not isinstance(exponent, Dual):
        return f
    tangent = 0.0
    if isinstance(x, Dual):
        nonzero = e != 0.0
        dx = np.where(nonzero, e * v ** np.where(nonzero, e - 1.0, 1.0), 0.0)
        tangent = tangent + x.tangent * dx[..., None]
    if isinstance(exponent, Dual):
        pos = v > 0.0
        de = np.where(pos, f * np.log(np.where(pos, v, 1.0)), 0.0)
        tangent = tangent + exponent.tangent * de[..., None]
    return Dual(f, tangent)


def stack(items, axis=-1):
    """``np.stack`` over a mixture of arrays and duals."""
    duals = [x for x in items if isinstance(x, Dual)]
    shape = np.broadcast_shapes(*(np.shape(value_of(x)) for x in items))
    values = [np.broadcast_to(value_of(x), shape) for x in items]
    if not duals:
        return np.stack(values, axis=axis)
    k = duals[0].n_tangent
    tangents = [
        np.broadcast_to(x.tangent, shape + (k,)) if isinstance(x, Dual) else np.zeros(shape + (k,))
        for x in items
    ]
    ax = axis % (len(shape) + 1)
    return Dual(np.stack(values, axis=ax), np.stack(tangents, axis=ax))


def concatenate(items, axis=-1):
    """``np.concatenate`` over a mixture of arrays and duals (``axis`` < 0 only)."""
    if axis >= 0:
        raise ValueError("use a negative axis so the tangent axis is not hit")
    duals = [x for x in items if isinstance(x, Dual)]
    if not duals:
        return np.concatenate(items, axis=axis)
    k = duals[0].n_tangent
    lead = np.broadcast_shapes(*(np.shape(value_of(x))[:axis] for x in items))
    values, tangents = [], []
    for x in items:
        v = value_of(x)
        v = np.broadcast_to(v, lead + v.shape[axis:])
        values.append(v)
        if isinstance(x, Dual):
            tangents.append(np.broadcast_to(x.tangent, v.shape + (k,)))
        else:
            tangents.append(np.zeros(v.shape + (k,)))
    return Dual(np.concatenate(values, axis=axis), np.concatenate(tangents, axis=axis - 1))


def where(cond, a, b):
    if not isinstance(a, Dual) and not isinstance(b, Dual):
        return np.where(cond, a, b)
    va, vb = value_of(a), value_of(b)
    shape = np.broadcast_shapes(np.shape(cond), va.shape, vb.shape)
    k = (a if isinstance(a, Dual) else b).n_tangent
    ta = np.broadcast_to(a.tangent, shape + (k,)) if isinstance(a, Dual) else np.zeros(shape + (k,))
    tb = np.broadcast_to(b.tangent, shape + (k,)) if isinstance(b, Dual) else np.zeros(shape + (k,))
    return Dual(np.where(cond, va, vb), np.where(np.asarray(cond)[..., None], ta, tb))


def linear(x, weight, bias):
    """Affine layer ``x @ weight.T + bias`` for arrays or duals in any slot."""
    if not any(isinstance(z, Dual) for z in (x, weight, bias)):
        return np.asarray(x) @ np.asarray(weight).T + bias
    xv, wv = value_of(x), value_of(weight)
    out = xv @ wv.T + value_of(bias)
    k = next(z for z in (x, weight, bias) if isinstance(z, Dual)).n_tangent
    t = np.zeros(out.shape + (k,))
    if isinstance(x, Dual):
        t = t + np.einsum("...ik,oi->...ok", x.tangent, wv)
    if isinstance(weight, Dual):
        t = t + np.einsum("...i,oik->...ok", xv, weight.tangent)
    if isinstance(bias, Dual):
        t = t + bias.tangent
    return Dual(out, t)
