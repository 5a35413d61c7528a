"""COO storage for sparse 3-way tensors, scaling, splitting and synthetic data."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import rng
from .errors import (
    DegenerateRange,
    DensityTooLow,
    DuplicateIndex,
    EmptyTensor,
    IndexOutOfRange,
    RatioSum,
)

DEFAULT_TARGET_MAX = 10.0


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SparseTensor:
    """Known entries of a ``dims``-shaped tensor in coordinate format.

    ``indices`` is an ``(n, 3)`` int64 array of 0-based ``(i, j, k)`` triples
    and ``values`` the matching float64 readings. Entries are kept sorted by
    ``(k, i, j)`` and both arrays are read-only. Build instances through
    :func:`from_entries` or :meth:`from_arrays`, which validate.
    """

    dims: tuple[int, int, int]
    indices: np.ndarray
    values: np.ndarray

    @classmethod
    def from_arrays(cls, dims, indices, values, *, presorted: bool = False) -> "SparseTensor":
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError(f"dims must be three positive extents, got {dims}")
        idx = np.array(indices, dtype=np.int64, copy=True).reshape(-1, 3)
        val = np.array(values, dtype=np.float64, copy=True).reshape(-1)
        if idx.shape[0] != val.shape[0]:
            raise ValueError(f"{idx.shape[0]} index triples but {val.shape[0]} values")
        if idx.shape[0] == 0:
            raise EmptyTensor("a sparse tensor needs at least one known entry")
        bad = (idx < 0) | (idx >= np.asarray(dims))
        if bad.any():
            row = int(np.flatnonzero(bad.any(axis=1))[0])
            raise IndexOutOfRange(f"entry {row} {tuple(idx[row])} outside dims {dims}")
        if not np.isfinite(val).all():
            raise ValueError("tensor values must be finite")
        if not presorted:
            order = np.lexsort((idx[:, 1], idx[:, 0], idx[:, 2]))
            idx, val = idx[order], val[order]
        lin = np.ravel_multi_index((idx[:, 2], idx[:, 0], idx[:, 1]), (dims[2], dims[0], dims[1]))
        dup = np.flatnonzero(np.diff(lin) == 0)
        if dup.size:
            raise DuplicateIndex(f"entry {tuple(idx[dup[0]])} appears more than once")
        return cls(dims, _frozen(np.ascontiguousarray(idx)), _frozen(val))

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    def __len__(self) -> int:
        return self.nnz

    @property
    def density(self) -> float:
        return self.nnz / (self.dims[0] * self.dims[1] * self.dims[2])

    @property
    def i(self) -> np.ndarray:
        return self.indices[:, 0]

    @property
    def j(self) -> np.ndarray:
        return self.indices[:, 1]

    @property
    def k(self) -> np.ndarray:
        return self.indices[:, 2]

    def entries(self) -> list[tuple[int, int, int, float]]:
        return [(int(a), int(b), int(c), float(v)) for (a, b, c), v in zip(self.indices, self.values)]

    def take(self, positions) -> "SparseTensor":
        """Sub-tensor holding the entries at ``positions`` (same dims)."""
        positions = np.sort(np.asarray(positions, dtype=np.int64))
        if positions.size == 0:
            raise EmptyTensor("selection is empty")
        return SparseTensor(self.dims, _frozen(self.indices[positions]), _frozen(self.values[positions]))

    def with_values(self, values) -> "SparseTensor":
        values = np.array(values, dtype=np.float64, copy=True)
        if values.shape != self.values.shape:
            raise ValueError("replacement values must match the entry count")
        return SparseTensor(self.dims, self.indices, _frozen(values))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseTensor):
            return NotImplemented
        return (
            self.dims == other.dims
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self) -> str:
        return f"SparseTensor(dims={self.dims}, nnz={self.nnz}, density={self.density:.4g})"


def from_entries(dims: Sequence[int], entries: Iterable[Sequence[float]]) -> SparseTensor:
    """Validate ``(i, j, k, value)`` tuples into a :class:`SparseTensor`."""
    rows = list(entries)
    if not rows:
        raise EmptyTensor("a sparse tensor needs at least one known entry")
    for n, row in enumerate(rows):
        if len(row) != 4:
            raise ValueError(f"entry {n} has {len(row)} fields, expected (i, j, k, value)")
        for x in row[:3]:
            if int(x) != x:
                raise ValueError(f"entry {n} has a non-integer index {x!r}")
    idx = np.array([r[:3] for r in rows], dtype=np.int64)
    val = np.array([r[3] for r in rows], dtype=np.float64)
    return SparseTensor.from_arrays(dims, idx, val)


# -- scaling -----------------------------------------------------------------


@dataclass(frozen=True)
class ScalingParams:
    y_min: float
    y_max: float
    target_max: float = DEFAULT_TARGET_MAX

    def __post_init__(self):
        if not self.y_max >= self.y_min:
            raise ValueError("y_max must be >= y_min")
        if not self.target_max > 0:
            raise ValueError("target_max must be positive")

    @classmethod
    def identity(cls, target_max: float = DEFAULT_TARGET_MAX) -> "ScalingParams":
        return cls(0.0, float(target_max), float(target_max))

    def scale(self, y):
        return self.target_max * (np.asarray(y, dtype=np.float64) - self.y_min) / (self.y_max - self.y_min)

    def unscale(self, value):
        return self.y_min + np.asarray(value, dtype=np.float64) * (self.y_max - self.y_min) / self.target_max


def scale_linear(tensor: SparseTensor, target_max: float = DEFAULT_TARGET_MAX) -> tuple[SparseTensor, ScalingParams]:
    """Min-max map the values onto ``[0, target_max]``."""
    y_min = float(tensor.values.min())
    y_max = float(tensor.values.max())
    if y_max == y_min:
        raise DegenerateRange(f"all {tensor.nnz} values equal {y_min}")
    params = ScalingParams(y_min, y_max, float(target_max))
    scaled = params.scale(tensor.values)
    # pin the endpoints; the affine map can land one ulp off target_max
    scaled[tensor.values == y_min] = 0.0
    scaled[tensor.values == y_max] = params.target_max
    return tensor.with_values(scaled), params


def unscale(value, params: ScalingParams):
    """Map scaled value(s) back to the original units."""
    out = params.unscale(value)
    return float(out) if out.ndim == 0 else out


# -- splitting ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SplitSets:
    """Disjoint train/validation/test partition of a tensor's entries.

    The three arrays hold positions into ``tensor.indices``.
    """

    tensor: SparseTensor
    train_idx: np.ndarray
    validation_idx: np.ndarray
    test_idx: np.ndarray

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (self.train_idx.size, self.validation_idx.size, self.test_idx.size)

    @property
    def train(self) -> SparseTensor:
        return self.tensor.take(self.train_idx)

    @property
    def validation(self) -> SparseTensor:
        return self.tensor.take(self.validation_idx)

    @property
    def test(self) -> SparseTensor | None:
        return self.tensor.take(self.test_idx) if self.test_idx.size else None


def split_sizes(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) < 0:
        raise RatioSum(f"need three non-negative ratios, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise RatioSum(f"ratios {ratios} sum to {sum(ratios)!r}, not 1")
    # the epsilon keeps e.g. 0.29 * 100 from flooring to 28
    n_val = math.floor(ratios[1] * n + 1e-9)
    n_test = math.floor(ratios[2] * n + 1e-9)
    # a positive ratio must yield a nonempty part
    if ratios[1] > 0 and n_val == 0:
        n_val = 1
    if ratios[2] > 0 and n_test == 0:
        n_test = 1
    n_train = n - n_val - n_test
    # tiny tensors: the forced minimums can starve training, so take the
    # shortfall from the larger held-out part while it can spare entries
    while ratios[0] > 0 and n_train < 1 and max(n_val, n_test) > 1:
        if n_test >= n_val:
            n_test -= 1
        else:
            n_val -= 1
        n_train += 1
    if n_train < 0 or (ratios[0] > 0 and n_train == 0):
        raise EmptyTensor(f"{n} entries cannot fill every part of ratios {ratios}")
    return n_train, n_val, n_test


def split(tensor: SparseTensor, ratios: Sequence[float] = (0.6, 0.2, 0.2), seed: int = 0) -> SplitSets:
    """Shuffle the entries with ``seed`` and cut them into three parts.

    Validation and test get ``floor(ratio * n)`` entries each; training
    receives the remainder.
    """
    n_train, n_val, _ = split_sizes(tensor.nnz, ratios)
    perm = rng.stream(seed, rng.SPLIT).permutation(tensor.nnz)
    parts = np.split(perm, [n_train, n_train + n_val])
    return SplitSets(tensor, *(_frozen(np.sort(p)) for p in parts))


# -- synthetic data ----------------------------------------------------------


def synth_low_rank(
    dims: Sequence[int],
    true_rank: int,
    seed: int = 0,
    noise_sd: float = 0.0,
    density: float = 0.1,
):
    """Sample a tensor from the sigmoid-mapped CP model.

    Ground-truth raw factors are uniform on ``[-1, 1]``; a random subset of
    ``round(density * cells)`` cells is observed with additive Gaussian
    noise. Returns ``(tensor, truth)`` where ``truth`` is a FactorSet.
    """
    from .factors import FactorSet, sigmoid

    dims = tuple(int(d) for d in dims)
    if true_rank < 1:
        raise ValueError("true_rank must be >= 1")
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    cells = dims[0] * dims[1] * dims[2]
    n = max(1, int(round(density * cells)))
    if n < true_rank * sum(dims):
        warnings.warn(
            f"{n} known entries for {true_rank * sum(dims)} generating parameters; "
            "the recovery problem is under-determined",
            DensityTooLow,
            stacklevel=2,
        )
    gen = rng.stream(seed, rng.SYNTH)
    truth = FactorSet(
        gen.uniform(-1.0, 1.0, (dims[0], true_rank)),
        gen.uniform(-1.0, 1.0, (dims[1], true_rank)),
        gen.uniform(-1.0, 1.0, (dims[2], true_rank)),
    )
    cells_taken = np.sort(gen.choice(cells, size=n, replace=False))
    i, j, k = np.unravel_index(cells_taken, dims)
    values = np.einsum(
        "nr,nr,nr->n", sigmoid(truth.U[i]), sigmoid(truth.O[j]), sigmoid(truth.M[k])
    )
    if noise_sd > 0:
        values = values + gen.normal(0.0, noise_sd, n)
    tensor = SparseTensor.from_arrays(dims, np.column_stack([i, j, k]), values)
    return tensor, truth
