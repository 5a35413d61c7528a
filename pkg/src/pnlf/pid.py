"""PID-controlled SGD: controller state and the per-instance update rule.

Each factor cell ``x`` carries a decayed integral ``I`` and the gradient it
saw on its previous update ``D``. On an update with gradient ``g``::

    x <- x - (eta * g + c_i * I + c_d * (g - D))
    I <- (1 - alpha) * I + alpha * g
    D <- g

The step uses ``I`` and ``D`` from before the update. "Time" is counted per
cell: a cell's state only moves when an instance touching it is processed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._accel import resolve_backend
from .config import Hyperparams
from .errors import IndexOutOfRange, NonFiniteUpdate
from .factors import FactorSet
from .kernels import MATRIX_NAMES, UPDATE_KERNELS


def discrete_pid(error_history: Sequence[float], c_p: float, c_i: float, c_d: float) -> float:
    """Adjusted error of a textbook discrete PID controller at the last step.

    The error before the first sample is taken as 0.
    """
    if len(error_history) == 0:
        raise ValueError("error_history must be nonempty")
    e_t = float(error_history[-1])
    e_prev = float(error_history[-2]) if len(error_history) > 1 else 0.0
    return c_p * e_t + c_i * float(sum(error_history)) + c_d * (e_t - e_prev)


def pid_delta(g: float, i_prev: float, d_prev: float, visited: bool, hyper: Hyperparams) -> float:
    """Amount subtracted from a cell whose instance gradient is ``g``."""
    delta = hyper.eta * g + hyper.c_i * i_prev
    if visited or hyper.first_visit_derivative == "literal":
        delta += hyper.c_d * (g - d_prev)
    return delta


def advance_state(i_prev: float, g: float, alpha: float) -> tuple[float, float]:
    return (1 - alpha) * i_prev + alpha * g, g


@dataclass(eq=False)
class ControllerState:
    I_U: np.ndarray
    I_O: np.ndarray
    I_M: np.ndarray
    D_U: np.ndarray
    D_O: np.ndarray
    D_M: np.ndarray
    visited_U: np.ndarray
    visited_O: np.ndarray
    visited_M: np.ndarray

    @classmethod
    def zeros_like(cls, factors: FactorSet) -> "ControllerState":
        mats = factors.matrices()
        return cls(
            *(np.zeros_like(m) for m in mats),
            *(np.zeros_like(m) for m in mats),
            *(np.zeros(m.shape, dtype=np.bool_) for m in mats),
        )

    @property
    def integral(self):
        return self.I_U, self.I_O, self.I_M

    @property
    def previous(self):
        return self.D_U, self.D_O, self.D_M

    @property
    def visited(self):
        return self.visited_U, self.visited_O, self.visited_M

    def arrays(self) -> tuple:
        return (*self.integral, *self.previous, *self.visited)

    def copy(self) -> "ControllerState":
        return ControllerState(*(a.copy() for a in self.arrays()))

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in (*self.integral, *self.previous))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ControllerState):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


def kernel_params(hyper: Hyperparams) -> tuple[np.ndarray, np.ndarray]:
    gains = np.array([hyper.eta, hyper.lam, hyper.c_i, hyper.c_d, hyper.alpha], dtype=np.float64)
    flags = np.array(
        [hyper.reg_mode == "analytic", hyper.first_visit_derivative == "literal"], dtype=np.int64
    )
    return gains, flags


def apply_instance_update(
    factors: FactorSet,
    state: ControllerState,
    entry,
    hyper: Hyperparams,
    backend: str | None = None,
) -> None:
    """Apply one PID step for training instance ``entry = (i, j, k, y)`` in place."""
    i, j, k, y = entry
    dims = factors.dims
    for name, idx, extent in zip("ijk", (i, j, k), dims):
        if not 0 <= idx < extent:
            raise IndexOutOfRange(f"{name}={idx} outside [0, {extent})")
    gains, flags = kernel_params(hyper)
    fail = np.zeros(3, dtype=np.int64)
    kernel = UPDATE_KERNELS[resolve_backend(backend)]
    scratch = np.empty((3, factors.rank))
    ok = kernel(
        *factors.matrices(), *state.arrays(), int(i), int(j), int(k), float(y), gains, flags, fail, scratch
    )
    if not ok:
        raise NonFiniteUpdate(MATRIX_NAMES[fail[0]], int(fail[1]), int(fail[2]))
