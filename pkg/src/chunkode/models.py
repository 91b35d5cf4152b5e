"""The four benchmark ODE systems.

Each builder returns an :class:`~chunkode.model.OdeModel` with an analytic
state Jacobian and the default parameter values of the timing study.  Rows
of the parameter tables become named segments of the flat parameter vector;
rows marked per batch have length ``n_batch``, per unit ``n_unit``.

All four start from the zero state (see :func:`initial_state`).
"""

from __future__ import annotations

import numpy as np

from chunkode import dual as D
from chunkode.model import OdeModel

TWO_PI = 2.0 * np.pi


def linspace(lo, hi, n):
    """Inclusive, equally spaced values; ``n == 1`` gives ``[lo]``."""
    if n < 1:
        raise ValueError("linspace needs n >= 1")
    return np.linspace(lo, hi, n)


def _layout(rows):
    """Concatenate named rows into one vector plus a name -> slice map."""
    segments, parts, lo = {}, [], 0
    for name, values in rows:
        values = np.atleast_1d(np.asarray(values, dtype=np.float64)).ravel()
        segments[name] = slice(lo, lo + values.size)
        parts.append(values)
        lo += values.size
    return np.concatenate(parts), segments


def initial_state(model, n_batch):
    return np.zeros((n_batch, model.n_size))


# ---------------------------------------------------------------------------
# mass-damper-spring chain


def build_mass_damper_spring(n_unit, n_batch):
    """Chain of ``n_unit`` masses, ``n_size = 2 n_unit``.

    State ``[d_1..d_n, v_1..v_n]``.  Element ``i`` connects to its neighbour
    ``i - 1`` through spring ``K_i`` and damper ``C_i``; element 1 is tied to
    the ground (``d_0 = v_0 = 0``) and carries the force
    ``f_a sin(2 pi t / T)``; the far end of element ``n`` is free.  Each
    connection's coefficients are scaled by ``1 / M_i`` of its own index.
    """
    if n_unit < 1:
        raise ValueError("n_unit must be >= 1")
    params, seg = _layout(
        [
            ("K", linspace(1e-2, 1.0, n_unit)),
            ("C", linspace(1e-6, 1e-4, n_unit)),
            ("M", linspace(1e-7, 1e-5, n_unit)),
            ("f_a", 1.0),
            ("T", linspace(1e-2, 1.0, n_batch)),
        ]
    )
    n = n_unit

    def rate(t, y, p):
        k = p[seg["K"]] / p[seg["M"]]
        c = p[seg["C"]] / p[seg["M"]]
        d = y[..., :n]
        v = y[..., n:]
        zero = np.zeros(np.shape(D.value_of(y))[:-1] + (1,))
        d_prev = D.concatenate([zero, d[..., :-1]])
        v_prev = D.concatenate([zero, v[..., :-1]])
        # connection force between element i and i-1
        link = k * (d - d_prev) + c * (v - v_prev)
        link_next = D.concatenate([link[..., 1:], zero])
        force = p[seg["f_a"]] * D.sin(TWO_PI * t / p[seg["T"]])
        drive = D.concatenate([force[..., None], np.zeros(zero.shape[:-1] + (n - 1,))])
        return D.concatenate([v, link_next - link + drive])

    def jacobian(t, y, p):
        k = p[seg["K"]] / p[seg["M"]]
        c = p[seg["C"]] / p[seg["M"]]
        j = np.zeros((2 * n, 2 * n))
        j[:n, n:] = np.eye(n)
        j[n:, :n] = _chain_operator(k)
        j[n:, n:] = _chain_operator(c)
        return np.broadcast_to(j, y.shape + (2 * n,))

    return OdeModel(
        n_size=2 * n_unit,
        params=params,
        rate_fn=rate,
        jacobian_fn=jacobian,
        segments=seg,
        name="mds",
    )


def _chain_operator(k):
    # d/dx of k_{i+1}(x_{i+1} - x_i) - k_i(x_i - x_{i-1}), x_0 = 0, k_{n+1} = 0
    n = k.size
    a = np.diag(-k)
    a[:-1, :-1] -= np.diag(k[1:])
    a[np.arange(1, n), np.arange(n - 1)] += k[1:]
    a[np.arange(n - 1), np.arange(1, n)] += k[1:]
    return a


# ---------------------------------------------------------------------------
# weakly coupled neurons

_NEURON_UNIT_ROWS = [
    ("C", 1e-1, 1.0),
    ("g_Na", 1e-1, 1.0),
    ("E_Na", 1e-1, 1.0),
    ("g_K", 1e-1, 1.0),
    ("E_K", 1e-1, 1.0),
    ("g_L", 1e-1, 1.0),
    ("E_L", 1e-1, 1.0),
    ("m_inf", 1e-1, 1.0),
    ("tau_m", 0.5, 5.0),
    ("h_inf", 1e-1, 1.0),
    ("tau_h", 1.5, 15.0),
    ("n_inf", 1e-1, 1.0),
    ("tau_n", 1.0, 10.0),
    ("g_C", 1e-3, 1e-2),
]


def build_neuron(n_unit, n_batch, period=None):
    """Coupled neurons driven by ``I_a sin(2 pi t / T_i)``, ``n_size = 4 n_unit``.

    State ``[V_1, m_1, h_1, n_1, ..., V_n, m_n, h_n, n_n]``.  ``I_a`` varies
    over the batch and ``T_i`` over the units; ``period`` replaces the
    per-unit periods with a single value.  The coupling term
    ``g_C,i sum_j (V_i - V_j)`` enters with a positive sign.
    """
    if n_unit < 1:
        raise ValueError("n_unit must be >= 1")
    rows = [(name, linspace(lo, hi, n_unit)) for name, lo, hi in _NEURON_UNIT_ROWS]
    rows.append(("I_a", linspace(1e-1, 1.0, n_batch)))
    periods = linspace(0.5, 2.0, n_unit) if period is None else np.full(n_unit, float(period))
    rows.append(("T", periods))
    params, seg = _layout(rows)
    n = n_unit

    def unpack(p):
        return {name: p[s] for name, s in seg.items()}

    def rate(t, y, p):
        q = unpack(p)
        V, m, h, nn = (y[..., i::4] for i in range(4))
        current = q["I_a"][:, None] * D.sin(TWO_PI * t[..., None] / q["T"])
        coupling = n * V - V.sum(axis=-1)[..., None]
        dV = (
            -q["g_Na"] * m**3 * h * (V - q["E_Na"])
            - q["g_K"] * nn**4 * (V - q["E_K"])
            - q["g_L"] * (V - q["E_L"])
            + current
            + q["g_C"] * coupling
        ) / q["C"]
        dm = (q["m_inf"] - m) / q["tau_m"]
        dh = (q["h_inf"] - h) / q["tau_h"]
        dn = (q["n_inf"] - nn) / q["tau_n"]
        out = D.stack([dV, dm, dh, dn], axis=-1)
        shape = D.value_of(out).shape
        return out.reshape(shape[:-2] + (4 * n,))

    def jacobian(t, y, p):
        q = unpack(p)
        V, m, h, nn = (y[..., i::4] for i in range(4))
        lead = y.shape[:-1]
        j = np.zeros(lead + (n, 4, n, 4))
        inv_c = 1.0 / q["C"]
        cross = np.broadcast_to(-q["g_C"] * inv_c, lead + (n,))
        j[..., :, 0, :, 0] = cross[..., :, None]
        idx = np.arange(n)
        j[..., idx, 0, idx, 0] = inv_c * (
            -q["g_Na"] * m**3 * h - q["g_K"] * nn**4 - q["g_L"] + q["g_C"] * (n - 1)
        )
        j[..., idx, 0, idx, 1] = -3.0 * inv_c * q["g_Na"] * m**2 * h * (V - q["E_Na"])
        j[..., idx, 0, idx, 2] = -inv_c * q["g_Na"] * m**3 * (V - q["E_Na"])
        j[..., idx, 0, idx, 3] = -4.0 * inv_c * q["g_K"] * nn**3 * (V - q["E_K"])
        j[..., idx, 1, idx, 1] = -1.0 / q["tau_m"]
        j[..., idx, 2, idx, 2] = -1.0 / q["tau_h"]
        j[..., idx, 3, idx, 3] = -1.0 / q["tau_n"]
        return j.reshape(lead + (4 * n, 4 * n))

    return OdeModel(
        n_size=4 * n_unit,
        params=params,
        rate_fn=rate,
        jacobian_fn=jacobian,
        segments=seg,
        name="neuron",
    )


# ---------------------------------------------------------------------------
# Chaboche viscoplasticity


def build_chaboche(n_unit, n_batch):
    """Viscoplastic model with ``n_unit`` backstresses, ``n_size = 2 + n_unit``.

    State ``[sigma, K, X_1..X_n]`` under the strain rate
    ``edot_a sin(2 pi t / T)`` with ``edot_a`` varying over the batch.  The
    flow rule uses ``<x> = max(x, 0)`` and ``sign(0) = 0``.
    """
    if n_unit < 1:
        raise ValueError("n_unit must be >= 1")
    params, seg = _layout(
        [
            ("E", 10.0),
            ("n", 5.0),
            ("eta", 2.0),
            ("sigma0", 1.0),
            ("K_inf", 10.0),
            ("tau", 1.0),
            ("C", linspace(0.1, 1.0, n_unit)),
            ("gamma", linspace(0.1, 0.5, n_unit)),
            ("edot_a", linspace(1e-1, 1.0, n_batch)),
            ("T", 1.0),
        ]
    )

    def scalar(p, name):
        return p[seg[name]][0]

    def flow(y, p):
        sigma, K, X = y[..., 0], y[..., 1], y[..., 2:]
        s = sigma - X.sum(axis=-1)
        over = D.macaulay((D.absolute(s) - K - scalar(p, "sigma0")) / scalar(p, "eta"))
        mag = D.power(over, scalar(p, "n"))
        return s, over, mag

    def rate(t, y, p):
        s, _, mag = flow(y, p)
        ep = mag * D.sign(s)
        strain_rate = p[seg["edot_a"]] * D.sin(TWO_PI * t / scalar(p, "T"))
        X = y[..., 2:]
        dsigma = scalar(p, "E") * (strain_rate - ep)
        dK = scalar(p, "tau") * (scalar(p, "K_inf") - y[..., 1])
        dX = (2.0 / 3.0) * p[seg["C"]] * ep[..., None] - p[seg["gamma"]] * X * mag[..., None]
        return D.concatenate([dsigma[..., None], dK[..., None], dX])

    def jacobian(t, y, p):
        s, over, mag = flow(y, p)
        E, n, eta = p[seg["E"]][0], p[seg["n"]][0], p[seg["eta"]][0]
        sg = np.sign(s)
        ep = mag * sg
        slope = np.where(over > 0.0, n * over ** (n - 1.0) / eta, 0.0)
        # derivatives of ep and |ep| with respect to (sigma, K, X_i)
        dep_dsigma = slope
        dep_dK = -slope * sg
        dmag_dsigma = slope * sg
        dmag_dK = -slope
        nx = y.shape[-1] - 2
        lead = y.shape[:-1]
        C = p[seg["C"]]
        gamma = p[seg["gamma"]]
        X = y[..., 2:]
        j = np.zeros(lead + (nx + 2, nx + 2))
        j[..., 0, 0] = -E * dep_dsigma
        j[..., 0, 1] = -E * dep_dK
        j[..., 0, 2:] = (E * dep_dsigma)[..., None]
        j[..., 1, 1] = -p[seg["tau"]][0]
        gx = gamma * X
        j[..., 2:, 0] = (2.0 / 3.0) * C * dep_dsigma[..., None] - gx * dmag_dsigma[..., None]
        j[..., 2:, 1] = (2.0 / 3.0) * C * dep_dK[..., None] - gx * dmag_dK[..., None]
        j[..., 2:, 2:] = (
            -(2.0 / 3.0) * C[:, None] * dep_dsigma[..., None, None]
            + gx[..., :, None] * dmag_dsigma[..., None, None]
        )
        idx = np.arange(nx)
        j[..., 2 + idx, 2 + idx] -= gamma * mag[..., None]
        return j

    return OdeModel(
        n_size=2 + n_unit,
        params=params,
        rate_fn=rate,
        jacobian_fn=jacobian,
        segments=seg,
        name="chaboche",
    )


def chaboche_yield_margin(model, y):
    """``|sigma - sum X| - K - sigma0``; positive means plastic flow."""
    sigma0 = model.param("sigma0")[0]
    return np.abs(y[..., 0] - y[..., 2:].sum(axis=-1)) - y[..., 1] - sigma0


# ---------------------------------------------------------------------------
# neural ODE


def build_neural_ode(n_unit, n_batch, seed=7):
    """Three-layer tanh network driven by ``f_a sin(2 pi t / T)``, ``n_size = n_unit``.

    Layer shapes (in, out): ``(n+1, n+1)``, ``(n+1, n+1)``, ``(n+1, n)``.
    Weights and biases are drawn once from ``U(-a, a)``, ``a = sqrt(1/(n+1))``,
    with ``numpy.random.default_rng(seed)`` in the order W1, b1, W2, b2, W3,
    b3.  They form the parameter vector; the forcing is fixed (``f_a = 1``,
    ``T = linspace(0.01, 1, n_batch)``).
    """
    if n_unit < 1:
        raise ValueError("n_unit must be >= 1")
    n = n_unit
    bound = np.sqrt(1.0 / (n + 1))
    rng = np.random.default_rng(seed)
    shapes = [
        ("W1", (n + 1, n + 1)),
        ("b1", (n + 1,)),
        ("W2", (n + 1, n + 1)),
        ("b2", (n + 1,)),
        ("W3", (n, n + 1)),
        ("b3", (n,)),
    ]
    params, seg = _layout([(name, rng.uniform(-bound, bound, size=shape)) for name, shape in shapes])
    shape_of = dict(shapes)
    f_a = 1.0
    periods = linspace(1e-2, 1.0, n_batch)

    def weights(p):
        return [
            p[seg[name]].reshape(shape_of[name]) if name.startswith("W") else p[seg[name]]
            for name, _ in shapes
        ]

    def forcing(t):
        return f_a * np.sin(TWO_PI * t / periods)

    def rate(t, y, p):
        W1, b1, W2, b2, W3, b3 = weights(p)
        x = D.concatenate([y, forcing(t)[..., None]])
        z1 = D.tanh(D.linear(x, W1, b1))
        z2 = D.tanh(D.linear(z1, W2, b2))
        return D.tanh(D.linear(z2, W3, b3))

    def jacobian(t, y, p):
        W1, b1, W2, b2, W3, b3 = weights(p)
        x = np.concatenate([y, forcing(t)[..., None]], axis=-1)
        z1 = np.tanh(x @ W1.T + b1)
        z2 = np.tanh(z1 @ W2.T + b2)
        out = np.tanh(z2 @ W3.T + b3)
        j = (1.0 - z1**2)[..., :, None] * W1[:, :n]
        j = (1.0 - z2**2)[..., :, None] * (W2 @ j)
        return (1.0 - out**2)[..., :, None] * (W3 @ j)

    return OdeModel(
        n_size=n_unit,
        params=params,
        rate_fn=rate,
        jacobian_fn=jacobian,
        segments=seg,
        name="node",
    )


#: problem key -> (builder, default t_max)
PROBLEMS = {
    "mds": (build_mass_damper_spring, 1.0),
    "neuron": (build_neuron, 10.0),
    "chaboche": (build_chaboche, 10.0),
    "node": (build_neural_ode, 1.0),
}


def build(problem, n_unit, n_batch, seed=7):
    """Build a benchmark problem by key; ``seed`` only affects ``node``."""
    try:
        builder, _ = PROBLEMS[problem]
    except KeyError:
        raise ValueError(f"unknown problem {problem!r}; choose from {sorted(PROBLEMS)}") from None
    if problem == "node":
        return builder(n_unit, n_batch, seed=seed)
    return builder(n_unit, n_batch)


def default_t_max(problem):
    return PROBLEMS[problem][1]


def build_scalar_decay(rate_const, n_batch=1):
    """``dy/dt = -p y`` with the single parameter ``p``; a closed-form check case."""

    def rate(t, y, p):
        return -p[0] * y

    def jacobian(t, y, p):
        return np.full(y.shape + (1,), -p[0])

    return OdeModel(1, [rate_const], rate, jacobian, segments={"p": slice(0, 1)}, name="scalar_decay")


def build_constant_rate(value, n_batch=1):
    """``dy/dt = p``; every Euler scheme integrates it exactly."""

    def rate(t, y, p):
        return p[0] + 0.0 * y

    def jacobian(t, y, p):
        return np.zeros(y.shape + (1,))

    return OdeModel(1, [value], rate, jacobian, segments={"p": slice(0, 1)}, name="constant_rate")
