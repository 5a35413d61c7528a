import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pnlf.errors import DuplicateIndex, NegativeValue, ParseError, UnknownColumn
from pnlf.ingest import IngestSpec, ingest_csv, write_meter_map
from pnlf.io import read_tensor_csv, write_tensor_csv
from pnlf.sparse_tensor import SparseTensor


def write(tmp_path, text, name="log.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_three_row_fixture(tmp_path):
    p = write(
        tmp_path,
        "timestamp,meter,power\n"
        "2013-06-07T00:00:01,m1,12.5\n"
        "2013-06-07T00:00:02,m2,3.0\n"
        "2013-06-07T13:45:10,m1,40.25\n",
    )
    res = ingest_csv(p)
    t = res.tensor
    assert t.dims == (86400, 2, 1) and t.nnz == 3
    assert res.meters == ["m1", "m2"]
    assert sorted(t.entries()) == [(1, 0, 0, 12.5), (2, 1, 0, 3.0), (49510, 0, 0, 40.25)]


def test_negative_value_row_number(tmp_path):
    p = write(tmp_path, "timestamp,meter,power\n2013-06-07T00:00:01,m1,1\n2013-06-07T00:00:02,m1,-1\n")
    with pytest.raises(NegativeValue) as info:
        ingest_csv(p)
    assert info.value.row == 3


def test_twenty_one_days_thirteen_meters(tmp_path):
    origin = dt.datetime(2013, 7, 1)
    lines = ["timestamp,meter,power"]
    for day in range(21):
        for m in range(13):
            sec = (day * 977 + m * 6131) % 86400
            lines.append(f"{(origin + dt.timedelta(days=day, seconds=sec)).isoformat()},meter{m:02d},{day + m / 10}")
    res = ingest_csv(write(tmp_path, "\n".join(lines) + "\n"))
    assert res.tensor.dims == (86400, 13, 21)
    assert res.tensor.nnz == 21 * 13
    assert res.date_origin == dt.date(2013, 7, 1)


def test_epoch_seconds_and_date_column(tmp_path):
    # 2013-06-07T00:00:10Z and the next day at 00:00:20
    p = write(tmp_path, "timestamp,meter,power\n1370563210,a,1\n1370649620,a,2\n")
    assert sorted(ingest_csv(p).tensor.entries()) == [(10, 0, 0, 1.0), (20, 0, 1, 2.0)]
    p = write(tmp_path, "date,time,id,w\n2013-06-07,00:01:00,a,1\n2013-06-09,00:02:00,b,2\n", "b.csv")
    spec = IngestSpec(time_step_column="time", meter_column="id", value_column="w", date_column="date", seconds_per_step=60)
    res = ingest_csv(p, spec)
    assert res.tensor.dims == (1440, 2, 3)
    assert sorted(res.tensor.entries()) == [(1, 0, 0, 1.0), (2, 1, 2, 2.0)]


def test_missing_values_skipped(tmp_path):
    p = write(tmp_path, "timestamp,meter,power\n2013-06-07T00:00:01,m1,\n2013-06-07T00:00:02,m1,nan\n2013-06-07T00:00:03,m1,4\n")
    res = ingest_csv(p)
    assert res.tensor.nnz == 1 and res.skipped == 2


def test_unknown_column(tmp_path):
    p = write(tmp_path, "time,meter,power\n2013-06-07T00:00:01,m1,1\n")
    with pytest.raises(UnknownColumn):
        ingest_csv(p)


def test_duplicate_cell(tmp_path):
    p = write(tmp_path, "timestamp,meter,power\n2013-06-07T00:00:01,m1,1\n2013-06-07T00:00:01+02:00,m1,2\n")
    with pytest.raises(DuplicateIndex, match="rows 2 and 3"):
        ingest_csv(p)


def test_parse_errors(tmp_path):
    p = write(tmp_path, "timestamp,meter,power\n2013-06-07T00:00:01,m1,1\nyesterday,m1,2\n")
    with pytest.raises(ParseError) as info:
        ingest_csv(p)
    assert info.value.row == 3
    p = write(tmp_path, "timestamp,meter,power\n2013-06-07T00:00:01,m1,abc\n", "c.csv")
    with pytest.raises(ParseError):
        ingest_csv(p)


def test_spec_validation():
    with pytest.raises(ValueError):
        IngestSpec(meter_column="timestamp")
    with pytest.raises(ValueError):
        IngestSpec(seconds_per_step=7)
    with pytest.raises(ValueError):
        IngestSpec(seconds_per_step=0)


@settings(max_examples=60, deadline=None)
@given(
    st.sets(st.tuples(st.integers(0, 9), st.integers(0, 4), st.integers(0, 6)), min_size=1, max_size=60),
    st.integers(0, 2**32),
)
def test_tensor_csv_roundtrip(tmp_path_factory, cells, seed):
    cells = sorted(cells)
    vals = np.random.default_rng(seed).uniform(0, 1e4, len(cells))
    t = SparseTensor.from_arrays((10, 5, 7), np.array(cells), vals)
    p = tmp_path_factory.mktemp("rt") / "t.csv"
    write_tensor_csv(t, p)
    assert ingest_csv(p).tensor == t
    assert read_tensor_csv(p) == t


def test_meter_map_bijection(tmp_path):
    rows = [f"2013-06-07T00:00:{s:02d},{m},1" for s, m in enumerate(["x", "y", "x", "z", "y", "w"])]
    res = ingest_csv(write(tmp_path, "timestamp,meter,power\n" + "\n".join(rows) + "\n"))
    write_meter_map(res, tmp_path / "map.csv")
    lines = (tmp_path / "map.csv").read_text().splitlines()
    assert lines[0] == "j,meter"
    pairs = [line.split(",") for line in lines[1:]]
    assert [m for _, m in pairs] == ["x", "y", "z", "w"]
    assert len({j for j, _ in pairs}) == len({m for _, m in pairs}) == 4
    assert res.meter_map() == {"x": 0, "y": 1, "z": 2, "w": 3}
