import pytest
from hypothesis import given, strategies as st

from crisismtl.errors import ValidationError
from crisismtl.ontology import (
    PriorityLevel,
    default_ontology,
    load_ontology,
    parse_ontology,
    priority_to_score,
    score_to_priority,
    write_ontology,
)


def test_default_ontology_sizes():
    ont = default_ontology()
    assert len(ont) == 25
    assert len(ont.actionable) == 6
    assert [t.index for t in ont] == list(range(25))
    assert len(set(ont.names)) == 25


def test_default_ontology_actionable_members():
    ont = default_ontology()
    assert ont.actionable == ont.names[:6]
    assert "Report-EmergingThreats" in ont.actionable
    assert ont.lookup("Other-Irrelevant").actionable is False


def test_default_ontology_is_stable():
    assert default_ontology() is default_ontology()
    with pytest.raises(Exception):
        default_ontology()[0].name = "x"


def test_unknown_type_lookup():
    with pytest.raises(ValidationError):
        default_ontology().lookup("Report-Nothing")


@pytest.mark.parametrize("level,score", [
    (PriorityLevel.CRITICAL, 1.0),
    (PriorityLevel.HIGH, 0.75),
    (PriorityLevel.MEDIUM, 0.5),
    (PriorityLevel.LOW, 0.25),
])
def test_priority_to_score(level, score):
    assert priority_to_score(level) == score


def test_priority_to_score_increasing():
    scores = [priority_to_score(lv) for lv in sorted(PriorityLevel)]
    assert scores == sorted(scores) and len(set(scores)) == 4


@pytest.mark.parametrize("score,level", [
    (0.0, PriorityLevel.LOW),
    (0.25, PriorityLevel.LOW),
    (0.2500001, PriorityLevel.MEDIUM),
    (0.5, PriorityLevel.MEDIUM),
    (0.75, PriorityLevel.HIGH),
    (0.8, PriorityLevel.CRITICAL),
    (1.0, PriorityLevel.CRITICAL),
])
def test_score_to_priority(score, level):
    assert score_to_priority(score) == level


@pytest.mark.parametrize("bad", [-0.01, 1.01, float("nan")])
def test_score_to_priority_domain(bad):
    with pytest.raises(ValidationError):
        score_to_priority(bad)


def test_round_trip():
    for level in PriorityLevel:
        assert score_to_priority(priority_to_score(level)) == level


@given(st.floats(0, 1), st.floats(0, 1))
def test_reverse_map_monotone(a, b):
    lo, hi = min(a, b), max(a, b)
    assert score_to_priority(lo) <= score_to_priority(hi)


def test_priority_parse():
    assert PriorityLevel.parse("Critical") is PriorityLevel.CRITICAL
    with pytest.raises(ValidationError):
        PriorityLevel.parse("Urgent")


def test_label_file_round_trip(tmp_path):
    path = tmp_path / "labels.txt"
    write_ontology(default_ontology(), path)
    assert load_ontology(path) == default_ontology()
    assert load_ontology(path).actionable == default_ontology().actionable


def test_label_file_parsing():
    ont = parse_ontology(["Request-SearchAndRescue\tactionable\n", "Other-Any\n", "\n"])
    assert ont.names == ["Request-SearchAndRescue", "Other-Any"]
    assert ont.actionable == ["Request-SearchAndRescue"]
    with pytest.raises(ValidationError):
        parse_ontology(["A\tmaybe"])
    with pytest.raises(ValidationError):
        parse_ontology(["A", "A"])
