"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback.  Set ``CHUNKODE_PURE_PYTHON=1`` to force the fallback.
"""

import contextlib
import os

from chunkode import _pykernels

try:
    from chunkode import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _pykernels}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

HAS_COMPILED = _compiled is not None

if HAS_COMPILED and os.environ.get("CHUNKODE_PURE_PYTHON", "") in ("", "0"):
    kernels = _compiled
else:
    kernels = _pykernels


def available():
    return sorted(_BACKENDS)


def current():
    return "compiled" if kernels is _compiled else "python"


def set_backend(name):
    global kernels
    try:
        kernels = _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {available()}") from None


@contextlib.contextmanager
def using(name):
    """Temporarily switch kernel backend."""
    prev = current()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)
