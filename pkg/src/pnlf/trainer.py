"""Training loop, evaluation, imputation and the ablation/sweep/repeat harnesses."""
from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__, rng
from ._accel import resolve_backend
from .config import Hyperparams
from .errors import DivergenceDetected, EmptySet, IndexOutOfRange, NonFiniteUpdate
from .factors import FactorSet, init_factors, predict_many
from .kernels import EPOCH_KERNELS, MATRIX_NAMES, RESIDUAL_KERNELS
from .pid import ControllerState, kernel_params
from .sparse_tensor import ScalingParams, SparseTensor, SplitSets, split


@dataclass(frozen=True)
class Metrics:
    rmse: float
    mae: float
    count: int


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    rmse: float
    mae: float
    ms: float


@dataclass
class TrainReport:
    epochs_run: int
    converged: bool
    stop_reason: str  # "tolerance" | "max_epochs" | "divergence"
    history: list[EpochRecord]
    final_metrics: Metrics | None
    hyper: Hyperparams
    seed: int
    backend: str
    version: str = __version__
    failure: str | None = None

    @property
    def wall_ms(self) -> float:
        return float(sum(h.ms for h in self.history))

    def deterministic_view(self) -> dict:
        """The report without wall-clock fields."""
        d = self.to_dict()
        for h in d["history"]:
            h.pop("ms")
        return d

    def to_dict(self) -> dict:
        return {
            "epochs_run": self.epochs_run,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "history": [dataclasses.asdict(h) for h in self.history],
            "final_metrics": dataclasses.asdict(self.final_metrics) if self.final_metrics else None,
            "hyper": self.hyper.to_dict(),
            "seed": self.seed,
            "backend": self.backend,
            "version": self.version,
            "failure": self.failure,
        }

    def records(self) -> list[dict]:
        """Line-delimited form: one record per epoch, then a summary record."""
        out = [{"type": "epoch", **dataclasses.asdict(h)} for h in self.history]
        summary = {k: v for k, v in self.to_dict().items() if k != "history"}
        out.append({"type": "summary", **summary})
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r) + "\n" for r in self.records())


def evaluate(factors: FactorSet, entries: SparseTensor, backend: str | None = None) -> Metrics:
    """RMSE and MAE of the model over exactly ``entries``."""
    if entries is None or len(entries) == 0:
        raise EmptySet("cannot evaluate on an empty set")
    ii, jj, kk = (np.ascontiguousarray(a) for a in (entries.i, entries.j, entries.k))
    for name, idx, extent in zip("ijk", (ii, jj, kk), factors.dims):
        if idx.min() < 0 or idx.max() >= extent:
            raise IndexOutOfRange(f"{name} index outside [0, {extent})")
    kernel = RESIDUAL_KERNELS[resolve_backend(backend)]
    sse, sae = kernel(*factors.matrices(), ii, jj, kk, np.ascontiguousarray(entries.values))
    n = len(entries)
    rmse = math.sqrt(sse / n)
    mae = sae / n
    # guard the power-mean inequality against last-ulp rounding
    return Metrics(max(rmse, mae), mae, n)


def train(
    train_set: SparseTensor,
    validation_set: SparseTensor,
    hyper: Hyperparams,
    seed: int = 0,
    *,
    test_set: SparseTensor | None = None,
    dims=None,
    backend: str | None = None,
    strict: bool = False,
    callback=None,
):
    """Fit factors to ``train_set``, stopping on the validation error.

    Each epoch visits the training instances in a fresh seeded order and then
    scores the validation set. Training stops once consecutive validation
    scores (``hyper.stop_metric``) differ by less than ``hyper.tol``, or after
    ``hyper.max_epochs`` epochs. A non-finite update ends the run with
    ``stop_reason="divergence"``; pass ``strict=True`` to raise
    :class:`DivergenceDetected` instead.

    Returns ``(factors, state, report)``.
    """
    if train_set is None or len(train_set) == 0:
        raise EmptySet("training set is empty")
    if validation_set is None or len(validation_set) == 0:
        raise EmptySet("validation set is empty")
    dims = tuple(dims) if dims is not None else train_set.dims
    backend = resolve_backend(backend)
    epoch_kernel = EPOCH_KERNELS[backend]

    factors = init_factors(dims, hyper.rank, seed)
    state = ControllerState.zeros_like(factors)
    gains, flags = kernel_params(hyper)
    fail = np.zeros(3, dtype=np.int64)
    ii = np.ascontiguousarray(train_set.i)
    jj = np.ascontiguousarray(train_set.j)
    kk = np.ascontiguousarray(train_set.k)
    yy = np.ascontiguousarray(train_set.values)
    if ii.max() >= dims[0] or jj.max() >= dims[1] or kk.max() >= dims[2]:
        raise IndexOutOfRange(f"training entries exceed dims {dims}")

    history: list[EpochRecord] = []
    stop_reason = "max_epochs"
    converged = False
    failure = None
    prev = None
    for epoch in range(hyper.max_epochs):
        t0 = time.perf_counter()
        order = rng.epoch_order(seed, epoch, len(train_set))
        status = epoch_kernel(
            *factors.matrices(), *state.arrays(), ii, jj, kk, yy, order, gains, flags, fail
        )
        if status >= 0:
            err = NonFiniteUpdate(MATRIX_NAMES[fail[0]], int(fail[1]), int(fail[2]), int(status))
            stop_reason, failure = "divergence", str(err)
            break
        m = evaluate(factors, validation_set, backend)
        ms = (time.perf_counter() - t0) * 1e3
        history.append(EpochRecord(epoch + 1, m.rmse, m.mae, ms))
        if callback is not None:
            callback(history[-1])
        score = m.rmse if hyper.stop_metric == "rmse" else m.mae
        if prev is not None and abs(score - prev) < hyper.tol:
            stop_reason, converged = "tolerance", True
            break
        prev = score

    final = None
    if test_set is not None and len(test_set) and stop_reason != "divergence":
        final = evaluate(factors, test_set, backend)
    report = TrainReport(
        epochs_run=len(history),
        converged=converged,
        stop_reason=stop_reason,
        history=history,
        final_metrics=final,
        hyper=hyper,
        seed=seed,
        backend=backend,
        failure=failure,
    )
    if failure is not None and strict:
        raise DivergenceDetected(report, err)
    return factors, state, report


def train_split(splits: SplitSets, hyper: Hyperparams, seed: int = 0, **kwargs):
    """``train`` on a SplitSets, scoring its test part at the end."""
    return train(
        splits.train, splits.validation, hyper, seed, test_set=splits.test, dims=splits.tensor.dims, **kwargs
    )


def impute(
    factors: FactorSet,
    scaling: ScalingParams,
    queries: Iterable[Sequence[int]],
    clamp: bool = False,
) -> list[tuple[int, int, int, float]]:
    """Predict cells ``(i, j, k)`` and map them back to original units."""
    q = np.asarray(list(queries), dtype=np.int64).reshape(-1, 3)
    if q.shape[0] == 0:
        return []
    pred = predict_many(factors, q[:, 0], q[:, 1], q[:, 2])
    values = scaling.unscale(pred)
    if clamp:
        values = np.clip(values, scaling.y_min, scaling.y_max)
    return [(int(a), int(b), int(c), float(v)) for (a, b, c), v in zip(q, values)]


# -- harnesses ----------------------------------------------------------------


def iteration_reduction(a: int, b: int) -> float:
    """``(larger - smaller) / larger`` as a percentage."""
    hi, lo = max(a, b), min(a, b)
    return 0.0 if hi == 0 else 100.0 * (hi - lo) / hi


@dataclass
class AblationReport:
    pid: TrainReport
    baseline: TrainReport

    @property
    def reduction_pct(self) -> float:
        return iteration_reduction(self.pid.epochs_run, self.baseline.epochs_run)

    def to_dict(self) -> dict:
        return {
            "pid": self.pid.to_dict(),
            "baseline": self.baseline.to_dict(),
            "pid_epochs": self.pid.epochs_run,
            "baseline_epochs": self.baseline.epochs_run,
            "reduction_pct": self.reduction_pct,
        }


def ablate(splits: SplitSets, hyper_pid: Hyperparams, seed: int = 0, **kwargs) -> AblationReport:
    """Train with the given PID gains and again with ``c_i = c_d = 0``."""
    if not hyper_pid.pid_enabled:
        raise ValueError("hyper_pid has c_i = c_d = 0; there is nothing to ablate")
    _, _, pid_report = train_split(splits, hyper_pid, seed, **kwargs)
    _, _, base_report = train_split(splits, hyper_pid.without_pid(), seed, **kwargs)
    return AblationReport(pid_report, base_report)


SWEEP_COLUMNS = ("epochs", "stop_reason", "rmse", "mae", "val_rmse", "val_mae", "ms")

_GRID_ALIASES = {"lambda": "lam"}


@dataclass
class SweepReport:
    params: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)

    @property
    def columns(self) -> tuple[str, ...]:
        return self.params + SWEEP_COLUMNS

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.columns, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow(row)
        return buf.getvalue()

    def column(self, name: str) -> list:
        return [row[name] for row in self.rows]


def _sweep_row(params: dict, report: TrainReport) -> dict:
    last = report.history[-1] if report.history else None
    final = report.final_metrics
    return {
        **params,
        "epochs": report.epochs_run,
        "stop_reason": report.stop_reason,
        "rmse": final.rmse if final else float("nan"),
        "mae": final.mae if final else float("nan"),
        "val_rmse": last.rmse if last else float("nan"),
        "val_mae": last.mae if last else float("nan"),
        "ms": round(report.wall_ms, 3),
    }


def sweep(
    splits: SplitSets,
    base_hyper: Hyperparams,
    param_grid: Mapping[str, Sequence],
    seed: int = 0,
    *,
    workers: int = 1,
    **kwargs,
) -> SweepReport:
    """Full-factorial grid over one or two hyperparameters.

    Grid keys are Hyperparams field names (``lambda`` is accepted for
    ``lam``). Cells are independent and run on ``workers`` threads.
    """
    if not param_grid or any(len(v) == 0 for v in param_grid.values()):
        raise ValueError("param_grid must name at least one parameter with values")
    if len(param_grid) > 2:
        raise ValueError("sweep varies one or two parameters")
    names = tuple(param_grid)
    fields_ = tuple(_GRID_ALIASES.get(n, n) for n in names)
    cells = [dict(zip(names, combo)) for combo in itertools.product(*param_grid.values())]
    hypers = [base_hyper.replace(**dict(zip(fields_, c.values()))) for c in cells]

    def run(h):
        return train_split(splits, h, seed, **kwargs)[2]

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            reports = list(pool.map(run, hypers))
    else:
        reports = [run(h) for h in hypers]
    return SweepReport(names, [_sweep_row(c, r) for c, r in zip(cells, reports)])


@dataclass
class RepeatSummary:
    reports: list[TrainReport]

    def _stat(self, values) -> tuple[float, float]:
        a = np.asarray(values, dtype=np.float64)
        return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0

    def summary(self) -> dict:
        finals = [r.final_metrics for r in self.reports if r.final_metrics is not None]
        out = {"repeats": len(self.reports)}
        out["epochs_mean"], out["epochs_std"] = self._stat([r.epochs_run for r in self.reports])
        if finals:
            out["rmse_mean"], out["rmse_std"] = self._stat([m.rmse for m in finals])
            out["mae_mean"], out["mae_std"] = self._stat([m.mae for m in finals])
        return out


def repeat(
    tensor: SparseTensor,
    ratios: Sequence[float],
    hyper: Hyperparams,
    seed: int = 0,
    repeats: int = 20,
    **kwargs,
) -> RepeatSummary:
    """Independent re-splits and re-fits; repetition ``r`` uses seed ``seed + r``."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    reports = []
    for r in range(repeats):
        s = seed + r
        reports.append(train_split(split(tensor, ratios, s), hyper, s, **kwargs)[2])
    return RepeatSummary(reports)
