import pytest
from hypothesis import given
from hypothesis import strategies as st

from berknash.document import Grid, Interval, ParamRef, format_document, parse_document, parse_value
from berknash.errors import ConfigError


class TestParseValue:
    def test_scalars(self):
        assert parse_value("401") == 401 and isinstance(parse_value("401"), int)
        assert parse_value("0.5") == 0.5
        assert parse_value("-inf") == float("-inf")
        assert parse_value("gaussian-linear") == "gaussian-linear"

    def test_structured(self):
        assert parse_value("[0, 2]") == Interval(0.0, 2.0)
        assert parse_value("grid(0, 2, 21)") == Grid(0.0, 2.0, 21)
        assert parse_value("param[1]") == ParamRef(1)
        assert parse_value("1, 2, 3") == (1, 2, 3)
        assert parse_value("0.5, 0.5; 0.2, 0.8") == ((0.5, 0.5), (0.2, 0.8))


class TestDocument:
    def test_round_trip(self):
        text = "state.cells = 41\ntheta.grid.0 = grid(0,2,21)\nkernel.model.a = param[0]\nsolve.discount = 0.9\n"
        doc = parse_document(text)
        assert parse_document(format_document(doc)) == doc

    def test_comments_and_blank_lines(self):
        doc = parse_document("# model\n\nsolve.discount = 0.5  \n")
        assert doc == {"solve.discount": 0.5}

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="bogus"):
            parse_document("bogus.key = 1\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="solve.discount"):
            parse_document("solve.discount = 0.5\nsolve.discount = 0.6\n")

    def test_missing_equals(self):
        with pytest.raises(ConfigError):
            parse_document("solve.discount 0.5\n")


@given(st.floats(allow_nan=False, allow_infinity=False, width=64))
def test_float_round_trip(v):
    doc = {"solve.discount": float(v)}
    assert parse_document(format_document(doc)) == doc
