import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from proxlitho.gridio import Grid, GridFormatError, fmt, read_grid, write_grid, write_table


def _text(grid):
    buf = io.StringIO()
    write_grid(buf, grid)
    return buf.getvalue()


@settings(max_examples=60, deadline=None)
@given(
    v=arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 6)),
             elements=st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False)),
    kind=st.sampled_from(["transmission", "intensity", "dose", "height"]),
)
def test_round_trip_at_nine_digits_and_stable_bytes(v, kind):
    g = Grid(kind, v, 0.5, (1.25, -3.0), 240.0)
    first = _text(g)
    back = read_grid(io.StringIO(first))
    assert back.kind == kind and back.pitch == 0.5 and back.origin == (1.25, -3.0) and back.gap == 240.0
    assert np.array_equal(back.values, np.array([[float(fmt(x)) for x in row] for row in v]))
    assert _text(back) == first


def test_file_round_trip_and_atomic_write(tmp_path):
    g = Grid("height", np.arange(12.0).reshape(3, 4) / 7, 2.0, comment="config_sha256 abc")
    path = tmp_path / "sub" / "h.grid"
    write_grid(path, g)
    back = read_grid(path, expect="height")
    assert back.comment == "config_sha256 abc"
    assert back.gap is None
    assert [p.name for p in path.parent.iterdir()] == ["h.grid"]


def test_header_layout():
    text = _text(Grid("dose", np.zeros((2, 3)), 0.5, gap=120.0, comment="hello world"))
    assert text.splitlines()[:9] == [
        "# proxlitho grid v1", "type dose", "size 3 2", "pitch 0.5 um", "origin 0 0 um",
        "gap 120 um", "unit mJ/cm2", "comment hello world", "data",
    ]


def test_payload_count_mismatch_reports_lines():
    rows = ["1 2 3 4"] * 3 + ["1 2 3"]
    text = "# proxlitho grid v1\ntype height\nsize 4 4\npitch 1 um\ndata\n" + "\n".join(rows) + "\n"
    with pytest.raises(GridFormatError, match=r"header says 4x4 \(16 values\) but payload has 15 values in 4 lines \(lines 6-9\)") as e:
        read_grid(io.StringIO(text))
    assert e.value.line == 9


def test_type_tag_mismatch():
    text = _text(Grid("height", np.ones((2, 2)), 1.0))
    with pytest.raises(GridFormatError, match="type mismatch"):
        read_grid(io.StringIO(text), expect="intensity")


@pytest.mark.parametrize(
    "body, message",
    [
        ("type height\nsize 2 1\npitch 1 um\n", "no 'data' line"),
        ("type height\nsize 2 1\npitch 1 um\ndata\n1 nan\n", "non-finite"),
        ("type height\nsize 2 1\npitch 1 um\ndata\n1 x\n", "malformed number"),
        ("type height\nsize 2 1\npitch 1 mm\ndata\n1 2\n", "pitch must be"),
        ("type height\nsize 2 1\npitch 1 um\nunit 1\ndata\n1 2\n", "unit for a height grid"),
        ("type phase\nsize 2 1\npitch 1 um\ndata\n1 2\n", "unknown grid type"),
        ("size 2 1\npitch 1 um\ndata\n1 2\n", "missing header key 'type'"),
    ],
)
def test_malformed_files_name_a_line(body, message):
    with pytest.raises(GridFormatError, match=message) as e:
        read_grid(io.StringIO("# proxlitho grid v1\n" + body))
    assert e.value.line is not None


def test_not_a_grid_file():
    with pytest.raises(GridFormatError, match="line 1"):
        read_grid(io.StringIO("hello\n"))


def test_grid_invariants():
    with pytest.raises(ValueError):
        Grid("height", np.array([[np.inf]]), 1.0)
    with pytest.raises(ValueError):
        Grid("height", np.ones((2, 2)), 1.0, comment="two\nlines")
    with pytest.raises(ValueError):
        Grid("height", np.ones(3), 1.0)


def test_table_format():
    buf = io.StringIO()
    write_table(buf, ["a", "b"], [(1.0 / 3, "x"), (2.0, "-")], comments=["note"])
    assert buf.getvalue() == "# note\na\tb\n0.333333333\tx\n2\t-\n"
