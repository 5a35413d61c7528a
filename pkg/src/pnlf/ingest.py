"""Turn meter reading logs into a (time step, meter, day) tensor.

Input is UTF-8 CSV with a header row. Each data row is one reading; the
columns named by :class:`IngestSpec` supply the timestamp, meter id and
power value. Timestamps may be ISO-8601 (``2013-06-07T13:45:10``, offsets
allowed and ignored, i.e. the wall-clock reading is used) or integer Unix
epoch seconds (interpreted as UTC). When ``date_column`` is set the day
comes from that column (ISO date, ISO datetime or epoch seconds) and the
time column may also be a bare ``HH:MM[:SS]`` time of day.

Index mapping:

* ``i`` = seconds since midnight // ``seconds_per_step``
* ``j`` = meter id in order of first appearance
* ``k`` = days since ``date_origin`` (default: the earliest day in the file)

Rows with an empty or NaN value are missing readings and are skipped.
"""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateIndex,
    EmptyTensor,
    NegativeValue,
    ParseError,
    UnknownColumn,
)
from .io import is_tensor_csv, read_tensor_csv
from .sparse_tensor import SparseTensor

SECONDS_PER_DAY = 86400


@dataclass(frozen=True)
class IngestSpec:
    time_step_column: str = "timestamp"
    meter_column: str = "meter"
    value_column: str = "power"
    date_column: str | None = None
    seconds_per_step: int = 1
    date_origin: dt.date | None = None

    def __post_init__(self):
        cols = [self.time_step_column, self.meter_column, self.value_column]
        if self.date_column is not None:
            cols.append(self.date_column)
        if len(set(cols)) != len(cols):
            raise ValueError(f"column names must be distinct, got {cols}")
        if int(self.seconds_per_step) != self.seconds_per_step or self.seconds_per_step < 1:
            raise ValueError("seconds_per_step must be a positive integer")
        if SECONDS_PER_DAY % self.seconds_per_step:
            raise ValueError("seconds_per_step must divide 86400")

    @property
    def steps_per_day(self) -> int:
        return SECONDS_PER_DAY // self.seconds_per_step


@dataclass
class IngestResult:
    tensor: SparseTensor
    meters: list[str] = field(default_factory=list)
    date_origin: dt.date | None = None
    skipped: int = 0

    def meter_map(self) -> dict[str, int]:
        return {m: j for j, m in enumerate(self.meters)}


def _is_int(text: str) -> bool:
    t = text.lstrip("+-")
    return t.isdigit()


def _parse_datetime(text: str, row: int) -> dt.datetime:
    text = text.strip()
    if _is_int(text):
        return dt.datetime.fromtimestamp(int(text), tz=dt.timezone.utc).replace(tzinfo=None)
    try:
        stamp = dt.datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise ParseError(row, f"unreadable timestamp {text!r}") from None
    return stamp.replace(tzinfo=None)


def _parse_day(text: str, row: int) -> dt.date:
    text = text.strip()
    if not _is_int(text) and len(text) == 10:
        try:
            return dt.date.fromisoformat(text)
        except ValueError:
            pass
    return _parse_datetime(text, row).date()


def _parse_seconds_in_day(text: str, row: int) -> int:
    text = text.strip()
    if not _is_int(text) and ":" in text and "-" not in text and "T" not in text:
        try:
            t = dt.time.fromisoformat(text)
        except ValueError:
            raise ParseError(row, f"unreadable time of day {text!r}") from None
    else:
        t = _parse_datetime(text, row).time()
    if t.microsecond:
        raise ParseError(row, f"sub-second timestamp {text!r}")
    return t.hour * 3600 + t.minute * 60 + t.second


def ingest_csv(path, spec: IngestSpec | None = None) -> IngestResult:
    """Read a reading log, or an already exported tensor CSV, into a tensor."""
    spec = spec or IngestSpec()
    path = Path(path)
    if is_tensor_csv(path):
        return IngestResult(read_tensor_csv(path))

    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = [spec.time_step_column, spec.meter_column, spec.value_column]
        if spec.date_column is not None:
            needed.append(spec.date_column)
        for col in needed:
            if col not in header:
                raise UnknownColumn(f"column {col!r} not in header {header}")

        meters: dict[str, int] = {}
        seen: dict[tuple[int, int, int], int] = {}
        raw = []  # (seconds_in_day, j, day, value, line)
        skipped = 0
        for line, rec in enumerate(reader, 2):
            vtext = (rec[spec.value_column] or "").strip()
            if vtext == "" or vtext.lower() == "nan":
                skipped += 1
                continue
            try:
                value = float(vtext)
            except ValueError:
                raise ParseError(line, f"unreadable value {vtext!r}") from None
            if not math.isfinite(value):
                raise ParseError(line, f"non-finite value {vtext!r}")
            if value < 0:
                raise NegativeValue(line, f"negative power reading {value}")
            ttext = rec[spec.time_step_column] or ""
            secs = _parse_seconds_in_day(ttext, line)
            if spec.date_column is None:
                day = _parse_datetime(ttext, line).date()
            else:
                day = _parse_day(rec[spec.date_column] or "", line)
            if secs % spec.seconds_per_step:
                raise ParseError(line, f"time {ttext!r} is not on a {spec.seconds_per_step}s step")
            meter = (rec[spec.meter_column] or "").strip()
            if not meter:
                raise ParseError(line, "empty meter id")
            j = meters.setdefault(meter, len(meters))
            raw.append((secs // spec.seconds_per_step, j, day, value, line))

    if not raw:
        raise EmptyTensor(f"{path}: no readings")
    origin = spec.date_origin or min(r[2] for r in raw)
    idx = np.empty((len(raw), 3), dtype=np.int64)
    val = np.empty(len(raw))
    for n, (i, j, day, value, line) in enumerate(raw):
        k = (day - origin).days
        if k < 0:
            raise ParseError(line, f"date {day} precedes date_origin {origin}")
        key = (i, j, k)
        if key in seen:
            raise DuplicateIndex(f"rows {seen[key]} and {line} both give cell {key}")
        seen[key] = line
        idx[n] = key
        val[n] = value
    dims = (spec.steps_per_day, len(meters), int(idx[:, 2].max()) + 1)
    return IngestResult(SparseTensor.from_arrays(dims, idx, val), list(meters), origin, skipped)


def write_meter_map(result: IngestResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "meter"])
        for j, m in enumerate(result.meters):
            w.writerow([j, m])
