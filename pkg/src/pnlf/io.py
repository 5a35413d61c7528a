"""File formats: tensor interchange CSV, model container, query/impute CSVs.

Tensor interchange CSV::

    # dims=I,J,K
    i,j,k,value
    0,3,1,12.5
    ...

Indices are 0-based; values are written with ``repr`` precision so a write
and read round-trips exactly.

Model container (``.npz``, numpy's zip of arrays):

``U``, ``O``, ``M``
    raw factor matrices, float64, row-major.
``meta``
    0-d unicode array holding a JSON object with keys ``format`` (always
    ``"pnlf-model/1"``), ``version``, ``dims``, ``rank``, ``scaling``
    (``{"y_min", "y_max", "target_max"}`` or null), ``hyper``, ``seed``,
    ``ratios`` and ``backend``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import __version__
from .config import Hyperparams
from .factors import FactorSet
from .sparse_tensor import ScalingParams, SparseTensor

MODEL_FORMAT = "pnlf-model/1"
DIMS_PREFIX = "# dims="


def is_tensor_csv(path) -> bool:
    with open(path, encoding="utf-8") as fh:
        return fh.readline().startswith(DIMS_PREFIX)


def write_tensor_csv(tensor: SparseTensor, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"{DIMS_PREFIX}{','.join(str(d) for d in tensor.dims)}\n")
        fh.write("i,j,k,value\n")
        for (i, j, k), v in zip(tensor.indices.tolist(), tensor.values.tolist()):
            fh.write(f"{i},{j},{k},{v!r}\n")


def read_tensor_csv(path) -> SparseTensor:
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if not first.startswith(DIMS_PREFIX):
            raise ValueError(f"{path}: missing '{DIMS_PREFIX}I,J,K' header line")
        dims = tuple(int(x) for x in first[len(DIMS_PREFIX):].strip().split(","))
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["i", "j", "k", "value"]:
            raise ValueError(f"{path}: expected column header i,j,k,value")
        rows = [r for r in reader if r]
    if not rows:
        idx, val = np.empty((0, 3), dtype=np.int64), np.empty(0)
    else:
        arr = np.array(rows)
        idx, val = arr[:, :3].astype(np.int64), arr[:, 3].astype(np.float64)
    return SparseTensor.from_arrays(dims, idx, val)


@dataclass
class Model:
    factors: FactorSet
    scaling: ScalingParams | None
    hyper: Hyperparams
    seed: int
    ratios: tuple[float, float, float]
    backend: str = "numba"
    version: str = __version__

    @property
    def effective_scaling(self) -> ScalingParams:
        """Scaling to undo at imputation time (identity when data was not scaled)."""
        return self.scaling or ScalingParams(0.0, 1.0, 1.0)

    def meta(self) -> dict:
        s = self.scaling
        return {
            "format": MODEL_FORMAT,
            "version": self.version,
            "dims": list(self.factors.dims),
            "rank": self.factors.rank,
            "scaling": None if s is None else {"y_min": s.y_min, "y_max": s.y_max, "target_max": s.target_max},
            "hyper": self.hyper.to_dict(),
            "seed": self.seed,
            "ratios": list(self.ratios),
            "backend": self.backend,
        }


def save_model(model: Model, path) -> None:
    f = model.factors
    with open(path, "wb") as fh:
        np.savez(fh, U=f.U, O=f.O, M=f.M, meta=np.array(json.dumps(model.meta())))


def load_model(path) -> Model:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format") != MODEL_FORMAT:
            raise ValueError(f"{path}: not a {MODEL_FORMAT} file")
        factors = FactorSet(z["U"], z["O"], z["M"])
    s = meta["scaling"]
    return Model(
        factors=factors,
        scaling=None if s is None else ScalingParams(s["y_min"], s["y_max"], s["target_max"]),
        hyper=Hyperparams(**meta["hyper"]),
        seed=int(meta["seed"]),
        ratios=tuple(meta["ratios"]),
        backend=meta.get("backend", "numba"),
        version=meta["version"],
    )


def read_queries_csv(path) -> list[tuple[int, int, int]]:
    """``i,j,k`` rows (header optional; extra columns ignored)."""
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for n, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#"):
                continue
            try:
                out.append((int(row[0]), int(row[1]), int(row[2])))
            except (ValueError, IndexError):
                if n == 1:
                    continue  # header
                raise ValueError(f"{path}:{n}: expected integer i,j,k")
    return out


def write_cells_csv(rows, path, value_name: str = "value") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "k", value_name])
        for i, j, k, v in rows:
            w.writerow([i, j, k, repr(float(v))])
