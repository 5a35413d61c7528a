"""Backend selection for the hot training kernels.

Two backends exist:

``numba``
    Scalar loops compiled with ``numba.njit``. If numba cannot be imported
    the same loops run as plain Python (slow, but bit-identical).
``numpy``
    Per-instance updates vectorized over the rank dimension with numpy.
    Agrees with ``numba`` to rounding (array ``np.exp`` is not libm ``exp``).

The default comes from the ``PNLF_BACKEND`` environment variable and falls
back to ``numba``. ``PNLF_DISABLE_JIT=1`` turns ``njit`` into a no-op, which
is handy under a debugger.
"""
from __future__ import annotations

import os

BACKENDS = ("numba", "numpy")
BACKEND_ENV = "PNLF_BACKEND"
DISABLE_JIT_ENV = "PNLF_DISABLE_JIT"

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

NUMBA_AVAILABLE = _numba is not None
JIT_ENABLED = NUMBA_AVAILABLE and os.environ.get(DISABLE_JIT_ENV, "") not in ("1", "true", "yes")


def njit(*args, **kwargs):
    """``numba.njit`` when JIT is enabled, identity decorator otherwise."""
    if JIT_ENABLED:
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func


def default_backend() -> str:
    name = os.environ.get(BACKEND_ENV, "numba").strip().lower()
    if name not in BACKENDS:
        raise ValueError(f"{BACKEND_ENV}={name!r}; expected one of {BACKENDS}")
    return name


def resolve_backend(name: str | None) -> str:
    if name is None:
        return default_backend()
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")
    return name
