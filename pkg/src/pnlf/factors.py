"""Latent factor matrices, the sigmoid link, prediction, objective and gradients.

The model predicts a known entry as

    y_hat[i, j, k] = sum_r s(U[i, r]) * s(O[j, r]) * s(M[k, r])

with ``s`` the logistic sigmoid, so every latent feature the model actually
uses is positive. These functions are the readable reference path; the
training loop runs the fused kernels in :mod:`pnlf.kernels`.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .errors import IndexOutOfRange

INIT_LOW = -3.0
INIT_HIGH = -2.0
REG_MODES = ("analytic", "paper")


def sigmoid(x):
    """Logistic function, stable for large ``|x|``; scalar in, float out."""
    a = np.asarray(x, dtype=np.float64)
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ex = np.exp(a[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out) if out.ndim == 0 else out


@dataclass(eq=False)
class FactorSet:
    """Raw (pre-sigmoid) factor matrices of shapes ``(I, R)``, ``(J, R)``, ``(K, R)``."""

    U: np.ndarray
    O: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        self.U = np.ascontiguousarray(self.U, dtype=np.float64)
        self.O = np.ascontiguousarray(self.O, dtype=np.float64)
        self.M = np.ascontiguousarray(self.M, dtype=np.float64)
        ranks = {self.U.shape[1], self.O.shape[1], self.M.shape[1]}
        if self.U.ndim != 2 or self.O.ndim != 2 or self.M.ndim != 2 or len(ranks) != 1:
            raise ValueError("factor matrices must be 2-D with a common column count")

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.U.shape[0], self.O.shape[0], self.M.shape[0])

    def matrices(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.U, self.O, self.M

    def copy(self) -> "FactorSet":
        return FactorSet(self.U.copy(), self.O.copy(), self.M.copy())

    def nonnegative(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """The sigmoid-mapped factors, the model's actual latent features."""
        return sigmoid(self.U), sigmoid(self.O), sigmoid(self.M)

    def is_finite(self) -> bool:
        return all(np.isfinite(m).all() for m in self.matrices())

    def __eq__(self, other) -> bool:
        if not isinstance(other, FactorSet):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.matrices(), other.matrices()))

    def save_csv(self, path) -> None:
        write_factors_csv(self, path)

    @classmethod
    def load_csv(cls, path) -> "FactorSet":
        return read_factors_csv(path)


def init_factors(dims, rank: int, seed: int = 0) -> FactorSet:
    """Uniform draws on ``[-3, -2]``: small positive features after the sigmoid."""
    dims = tuple(int(d) for d in dims)
    if min(dims) < 1 or rank < 1:
        raise ValueError("dims and rank must be positive")
    gen = rng.stream(seed, rng.INIT)
    return FactorSet(
        gen.uniform(INIT_LOW, INIT_HIGH, (dims[0], rank)),
        gen.uniform(INIT_LOW, INIT_HIGH, (dims[1], rank)),
        gen.uniform(INIT_LOW, INIT_HIGH, (dims[2], rank)),
    )


def _check_indices(factors: FactorSet, i, j, k) -> None:
    for name, idx, extent in zip("ijk", (i, j, k), factors.dims):
        idx = np.asarray(idx)
        if idx.size and (idx.min() < 0 or idx.max() >= extent):
            raise IndexOutOfRange(f"{name} index outside [0, {extent})")


def predict_many(factors: FactorSet, i, j, k) -> np.ndarray:
    i, j, k = (np.asarray(a, dtype=np.int64) for a in (i, j, k))
    _check_indices(factors, i, j, k)
    su, so, sm = sigmoid(factors.U[i]), sigmoid(factors.O[j]), sigmoid(factors.M[k])
    return np.sum(su * so * sm, axis=-1)


def predict(factors: FactorSet, i: int, j: int, k: int) -> float:
    return float(predict_many(factors, [i], [j], [k])[0])


def _entry_arrays(entries):
    """Accept a SparseTensor or an iterable of ``(i, j, k, y)``."""
    if hasattr(entries, "indices") and hasattr(entries, "values"):
        return entries.indices[:, 0], entries.indices[:, 1], entries.indices[:, 2], entries.values
    rows = np.asarray(list(entries), dtype=np.float64).reshape(-1, 4)
    idx = rows[:, :3].astype(np.int64)
    return idx[:, 0], idx[:, 1], idx[:, 2], rows[:, 3]


def objective(factors: FactorSet, entries, lam: float) -> float:
    """Half the squared error plus per-instance sigmoid-feature ridge, summed over entries."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    i, j, k, y = _entry_arrays(entries)
    _check_indices(factors, i, j, k)
    su, so, sm = sigmoid(factors.U[i]), sigmoid(factors.O[j]), sigmoid(factors.M[k])
    resid = y - np.sum(su * so * sm, axis=-1)
    ridge = np.sum(su**2 + so**2 + sm**2, axis=-1)
    return float(0.5 * np.sum(resid**2 + lam * ridge))


def instance_gradients(factors: FactorSet, entry, lam: float, reg_mode: str = "analytic"):
    """Gradients of one instance's loss w.r.t. ``U[i]``, ``O[j]``, ``M[k]``.

    ``reg_mode="analytic"`` differentiates the ridge term exactly,
    ``lam * s^2 * (1 - s)``. ``reg_mode="paper"`` uses
    ``lam * s * (1 - s) * x`` with ``x`` the raw factor value instead.
    """
    if reg_mode not in REG_MODES:
        raise ValueError(f"reg_mode must be one of {REG_MODES}")
    i, j, k, y = entry
    _check_indices(factors, i, j, k)
    u, o, m = factors.U[i], factors.O[j], factors.M[k]
    su, so, sm = sigmoid(u), sigmoid(o), sigmoid(m)
    err = y - float(np.sum(su * so * sm))

    def reg(x, s):
        if reg_mode == "analytic":
            return lam * s * s * (1.0 - s)
        return lam * s * (1.0 - s) * x

    g_u = -err * su * (1.0 - su) * so * sm + reg(u, su)
    g_o = -err * so * (1.0 - so) * su * sm + reg(o, so)
    g_m = -err * sm * (1.0 - sm) * su * so + reg(m, sm)
    return g_u, g_o, g_m


# -- persistence -------------------------------------------------------------
#
# Flat CSV layout, row-major:
#   # pnlf-factors dims=I,J,K rank=R
#   mode,row,f0,...,f{R-1}
#   U,0,...
# with modes U, O, M in that order and values printed with repr precision.


def write_factors_csv(factors: FactorSet, path) -> None:
    I, J, K = factors.dims
    R = factors.rank
    buf = io.StringIO()
    buf.write(f"# pnlf-factors dims={I},{J},{K} rank={R}\n")
    buf.write("mode,row," + ",".join(f"f{r}" for r in range(R)) + "\n")
    for name, mat in zip("UOM", factors.matrices()):
        for row, vec in enumerate(mat):
            buf.write(f"{name},{row}," + ",".join(repr(float(v)) for v in vec) + "\n")
    Path(path).write_text(buf.getvalue())


def read_factors_csv(path) -> FactorSet:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    if len(head) != 4 or head[:2] != ["#", "pnlf-factors"]:
        raise ValueError(f"{path}: not a pnlf factor file")
    dims = tuple(int(x) for x in head[2].removeprefix("dims=").split(","))
    R = int(head[3].removeprefix("rank="))
    mats = {name: np.empty((n, R)) for name, n in zip("UOM", dims)}
    seen = {name: 0 for name in "UOM"}
    for line in lines[2:]:
        mode, row, *vals = line.split(",")
        mats[mode][int(row)] = [float(v) for v in vals]
        seen[mode] += 1
    if tuple(seen.values()) != dims:
        raise ValueError(f"{path}: row counts {tuple(seen.values())} do not match dims {dims}")
    return FactorSet(mats["U"], mats["O"], mats["M"])
