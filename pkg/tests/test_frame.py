from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from openanalyst.tabular import EmptyInput, Frame, Unparseable, parse_table
from openanalyst.tabular.frame import Column, serialize_frame


def kinds_of(frame):
    return {c.name: c.kind for c in frame.columns}


def test_basic_comma_csv():
    frame = parse_table(b"a,b\n1,x\n2,y\n")
    assert frame.column_names() == ["a", "b"]
    assert kinds_of(frame) == {"a": "integer", "b": "text"}
    assert frame.rows == ((1, "x"), (2, "y"))


def test_semicolon_sniffed():
    frame = parse_table(b"a;b\n1;2\n3;4\n")
    assert frame.column_names() == ["a", "b"]
    assert frame.row_count == 2


def test_tab_and_pipe():
    assert parse_table(b"a\tb\n1\t2\n").column_names() == ["a", "b"]
    assert parse_table(b"a|b\n1|2\n").column_names() == ["a", "b"]


def test_semicolon_not_mistaken_for_single_comma_column():
    # a single-column comma parse "succeeds" trivially; the wider semicolon
    # table must win
    frame = parse_table(b"name;score\nann;3\nbob;4\n")
    assert frame.column_names() == ["name", "score"]


def test_single_column_fallback():
    frame = parse_table(b"value\n1\n2\n3\n")
    assert frame.column_names() == ["value"]
    assert kinds_of(frame) == {"value": "integer"}


def test_hint_separator_tried_first():
    frame = parse_table(b"a,b;c\n1,2;3\n", hint=(",", None))
    assert len(frame.columns) == 2


def test_latin1_fallback():
    data = "city,n\nMálaga,1\n".encode("latin-1")
    frame = parse_table(data)
    assert frame.rows[0][0] == "Málaga"


def test_utf8_bom_stripped():
    frame = parse_table("\ufeffa,b\n1,2\n".encode("utf-8"))
    assert frame.column_names() == ["a", "b"]


def test_ragged_rows_dropped_within_tolerance():
    rows = b"a,b\n" + b"1,2\n" * 19 + b"1,2,3\n"
    frame = parse_table(rows)
    assert frame.row_count == 19


def test_whitespace_only_input_unparseable():
    with pytest.raises(Unparseable):
        parse_table(b"\n\n\n")


def test_too_many_ragged_rows_rejects_that_separator():
    # comma arity collapses (modal 1 vs 2-wide header), so the parse falls
    # back to a single wide text column instead of the comma table
    frame = parse_table(b"a,b\n1,2\n1\n2\n3,4,5\n")
    assert len(frame.columns) == 1


def test_empty_input():
    with pytest.raises(EmptyInput):
        parse_table(b"")


def test_kind_inference_majority():
    # 1 stray text cell out of 10 stays within the 90% numeric majority
    body = b"v\n" + b"\n".join(str(i).encode() for i in range(9)) + b"\nn/a\n"
    assert kinds_of(parse_table(body))["v"] == "integer"
    # 2 stray cells out of 10 drop below it
    body = b"v\n" + b"\n".join(str(i).encode() for i in range(8)) + b"\nn/a\nn/a\n"
    assert kinds_of(parse_table(body))["v"] == "text"


def test_real_boolean_date_kinds():
    frame = parse_table(b"r,b,d\n1.5,true,2021-01-02\n2.5,false,2022-03-04\n")
    assert kinds_of(frame) == {"r": "real", "b": "boolean", "d": "date"}
    assert frame.rows[0] == (1.5, True, date(2021, 1, 2))


def test_missing_cells_become_none():
    frame = parse_table(b"a,b\n1,\n,x\n")
    assert frame.rows == ((1, None), (None, "x"))


def test_duplicate_and_blank_headers_renamed():
    frame = parse_table(b"a,a,\n1,2,3\n")
    assert frame.column_names() == ["a", "a_", "column_3"]


def test_frame_invariants():
    with pytest.raises(ValueError):
        Frame(columns=(Column("a", "integer"), Column("a", "text")), rows=())
    with pytest.raises(ValueError):
        Frame(columns=(Column("a", "integer"),), rows=((1, 2),))
    with pytest.raises(ValueError):
        Column("a", "complex")


def test_column_access():
    frame = parse_table(b"a,b\n1,x\n2,y\n")
    assert frame.column_values("a") == [1, 2]
    with pytest.raises(KeyError):
        frame.column_index("zz")


@given(
    st.lists(
        st.tuples(st.integers(-1000, 1000), st.sampled_from(["ann", "bob", "cy"])),
        min_size=1,
        max_size=50,
    )
)
@settings(max_examples=50, deadline=None)
def test_serialize_parse_round_trip(rows):
    frame = Frame(
        columns=(Column("n", "integer"), Column("name", "text")),
        rows=tuple((a, b) for a, b in rows),
    )
    again = parse_table(serialize_frame(frame))
    assert again.column_names() == frame.column_names()
    assert again.rows == frame.rows
