import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from predmon.errors import InvalidTable, NonFiniteValue
from predmon.policy import (DEMO_TABLES, Band, ThresholdTable, correct_action, correct_actions, load_tables,
                            range_mismatch_lint, save_tables, severity_lint, validate_table)

INF = math.inf


def three_band():
    return ThresholdTable("hr", (Band(-INF, 60, 1, "low", 1), Band(60, 100, 0, "none", 0),
                                 Band(100, INF, 2, "high", 1)))


def test_membership():
    assert correct_action(three_band(), 72) == 0
    assert correct_action(three_band(), 59.999) == 1
    assert correct_action(three_band(), 100) == 2


def test_boundary_lower_inclusive():
    assert correct_action(three_band(), 60) == 0


def test_nan_value():
    with pytest.raises(NonFiniteValue):
        correct_action(three_band(), float("nan"))


def test_valid_table():
    assert validate_table(three_band()) == []
    for t in DEMO_TABLES.values():
        assert validate_table(t) == []


def test_gap_violation():
    t = ThresholdTable("x", (Band(-INF, 60, 1, "a", 1), Band(61, INF, 0, "none", 0)))
    problems = validate_table(t)
    assert any("gap [60" in p and "61" in p for p in problems)


def test_duplicate_id():
    t = ThresholdTable("x", (Band(-INF, 60, 2, "a", 1), Band(60, 100, 0, "none", 0), Band(100, INF, 2, "b", 1)))
    assert any("duplicate action id 2" in p for p in validate_table(t))


def test_overlap():
    t = ThresholdTable("x", (Band(-INF, 70, 1, "a", 1), Band(60, INF, 0, "none", 0)))
    assert any("overlap" in p for p in validate_table(t))


def test_from_dict_rejects_invalid():
    d = three_band().to_dict()
    d["bands"][0]["hi"] = 55
    with pytest.raises(InvalidTable):
        ThresholdTable.from_dict(d)


def test_json_round_trip(tmp_path):
    save_tables(DEMO_TABLES.values(), tmp_path / "t.json")
    back = load_tables(tmp_path / "t.json")
    assert back == DEMO_TABLES
    assert '"-inf"' in (tmp_path / "t.json").read_text()


def test_team_lookup():
    t = DEMO_TABLES["heart_rate"]
    assert t.n_actions == 5
    assert t.team(0) == "none" and t.severity(0) == 0
    assert t.severity(4) == 2


def test_severity_lint():
    bad = ThresholdTable("x", (Band(-INF, 0, 1, "a", 1), Band(0, 1, 2, "b", 2), Band(1, INF, 0, "none", 0)))
    assert severity_lint(bad)
    assert severity_lint(DEMO_TABLES["heart_rate"]) == []


def test_range_mismatch_lint():
    t = DEMO_TABLES["temperature"]  # normal band in Celsius
    assert range_mismatch_lint(t, np.full(50, 98.6))  # Fahrenheit data
    assert range_mismatch_lint(t, np.full(50, 37.0)) == []


@st.composite
def valid_tables(draw):
    k = draw(st.integers(2, 7))
    cuts = sorted(draw(st.lists(st.floats(-1e6, 1e6), min_size=k - 1, max_size=k - 1, unique=True)))
    bounds = [-INF, *cuts, INF]
    ids = draw(st.permutations(range(k)))
    normal = draw(st.integers(0, k - 1))
    bands = [Band(bounds[i], bounds[i + 1], ids[i], f"team{i}", 0 if i == normal else 1) for i in range(k)]
    return ThresholdTable("ch", tuple(draw(st.permutations(bands))))


@given(valid_tables(), st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_totality(table, values):
    assert validate_table(table) == []
    vec = correct_actions(table, values)
    for v, a in zip(values, vec):
        hits = [b.action for b in table.bands if b.lo <= v < b.hi]
        assert len(hits) == 1
        assert correct_action(table, v) == hits[0] == a
