import numpy as np
import pytest

from mcms.scale import (
    Attention,
    FactorDef,
    ResponseMatrix,
    ScaleDefinition,
    dump_scale,
    load_scale,
    parse_scale,
    save_scale,
    validate_scale,
)


def test_builtin_layout(mcms):
    assert len(mcms.factors) == 6
    assert len(mcms.items) == 18
    assert all(len(f.items) == 3 for f in mcms.factors)
    assert mcms.factor("Intrinsic Motivation").marker == "Intrin1"
    assert (mcms.response_min, mcms.response_max) == (1, 7)
    assert mcms.factor_names[0] == "Amotivation"
    assert mcms.items[:3] == ("Am1", "Am2", "Am3")


def test_builtin_validates(mcms):
    assert validate_scale(mcms) == []


def test_empty_factor_reported():
    s = ScaleDefinition("x", "", 1, 7, (FactorDef("A", ("a1", "a2")), FactorDef("X", ())))
    assert "factor X has no items" in validate_scale(s)


def test_duplicate_item_reported():
    s = ScaleDefinition(
        "x", "", 1, 7, (FactorDef("A", ("a1", "a2")), FactorDef("B", ("a2", "b1")))
    )
    problems = validate_scale(s)
    assert len([p for p in problems if "appears in both" in p]) == 1


def test_other_violations():
    s = ScaleDefinition("x", "", 5, 5, (FactorDef("A", ("a1",), marker="zz"),))
    problems = " | ".join(validate_scale(s))
    assert "response range" in problems
    assert "fewer than 2 items" in problems
    assert "marker zz" in problems


def test_round_trip_text(mcms):
    text = dump_scale(mcms)
    again = parse_scale(text)
    assert again == mcms
    assert dump_scale(again) == text


def test_round_trip_file(tmp_path, mcms):
    path = tmp_path / "scale.yaml"
    save_scale(mcms, path)
    assert load_scale(path) == mcms
    assert load_scale(path).item_text == mcms.item_text


def test_marker_defaults_to_first_item():
    assert FactorDef("F", ("x", "y")).marker == "x"


@pytest.mark.parametrize(
    "text, value",
    [("Yes", Attention.YES), ("no", Attention.NO), ("Don't know", Attention.DONT_KNOW),
     ("", Attention.MISSING)],
)
def test_attention_parse(text, value):
    assert Attention.parse(text) is value


def test_attention_parse_rejects_garbage():
    with pytest.raises(ValueError):
        Attention.parse("maybe")


def test_response_matrix_read_only():
    m = ResponseMatrix(("a", "b"), [[1, 2], [3, 4]])
    assert m.n == 2
    with pytest.raises(ValueError):
        m.rows[0, 0] = 5
    np.testing.assert_array_equal(m.columns(["b"]), [[2], [4]])


def test_response_matrix_shape_checked():
    with pytest.raises(ValueError):
        ResponseMatrix(("a", "b"), [[1, 2, 3]])
