import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebsm.codegen import Gate
from ebsm.model import EnumType, IntType, Model
from ebsm.parser import (
    ModelSourceError,
    format_model,
    load_model,
    parse_guidance,
    parse_model,
)

from conftest import bundled, model_from

MINI = """\
machine Mini
var x : int 0..3 := 0
statemachine M kind controller initial A
  state A
  state B
  transition go from A to B when x = 0 then x := 1
taskbody
  eval M
"""


def codes(diags):
    return [d.code for d in diags if d.is_error]


def test_fixture_shape(stop_start):
    assert stop_start.name == "StopStart01b"
    assert len(stop_start.statemachines) == 6
    eng = stop_start.machine("EngMode")
    assert eng.states == ("ENG_STOPPING", "ENG_CRANKING", "ENG_RUNNING", "ENG_OFF")
    assert eng.initial == "ENG_OFF"
    names = {t.name for t in eng.transitions}
    # six core engine transitions plus the reconstructed RUNNING -> STOPPING step
    assert names == {"s1", "s2", "s3", "s5", "s6", "userStart", "s4"}
    s5 = eng.transition("s5")
    assert (s5.source, s5.target) == ("ENG_STOPPING", "ENG_OFF")


def test_fixture_types(stop_start):
    types = stop_start.types()
    assert types["ENG_EngineSpeed"] == IntType(0, 1000)
    assert types["EngMode"] == EnumType(
        "EngMode_STATES", ("ENG_STOPPING", "ENG_CRANKING", "ENG_RUNNING", "ENG_OFF"))
    assert types["SSE_EngMode"] == types["EngMode"]
    assert "Eng_Idle_Speed" in stop_start.constants()


def test_empty_input():
    diags = parse_model("")
    assert isinstance(diags, list)
    assert diags[0].is_error
    assert "expected 'machine'" in diags[0].message


def test_unknown_state_names_state_and_line():
    src = open(bundled("stop_start.ebsm"), encoding="utf-8").read()
    bad = src.replace("transition s2 from ENG_CRANKING", "transition s2 from ENG_WARMING")
    line = bad.splitlines().index(
        next(l for l in bad.splitlines() if "ENG_WARMING" in l)) + 1
    diags = parse_model(bad)
    assert isinstance(diags, list)
    hits = [d for d in diags if d.code == "unknown-state"]
    assert len(hits) == 1
    assert "ENG_WARMING" in hits[0].message
    assert hits[0].line == line


@pytest.mark.parametrize("src, code", [
    (MINI.replace("state B", "state A"), "duplicate-state"),
    (MINI.replace("initial A", "initial Q"), "missing-initial"),
    (MINI.replace("when x = 0", "when x = TRUE"), "type-mismatch"),
    (MINI.replace("x := 1", "x := 9"), "type-mismatch"),
    (MINI.replace("x := 1", "x := 1 par x := 2"), "duplicate-assignment"),
    (MINI.replace("x := 1", "M := B"), "state-assignment"),
    (MINI.replace("eval M", "eval M, M"), "duplicate-eval"),
    (MINI.replace("  eval M\n", ""), "missing-eval"),
    (MINI.replace("var x : int 0..3 := 0", "var x : int 0..3 := 0\nvar x : bool := FALSE"),
     "duplicate-identifier"),
])
def test_resolution_errors(src, code):
    diags = parse_model(src)
    assert isinstance(diags, list)
    assert code in codes(diags)


def test_mini_parses():
    m = model_from(MINI)
    assert m.machine("M").transition("go").target == "B"
    assert m.taskbody.eval == ("M",)
    assert not m.taskbody.periodic


def test_comments_and_layout_ignored():
    spaced = MINI.replace("\n", "   -- note\n").replace(" when ", "\n    when ")
    assert model_from(spaced) == model_from(MINI)


def test_round_trip(stop_start):
    again = model_from(format_model(stop_start))
    assert again == stop_start


def test_load_raises(tmp_path):
    path = tmp_path / "broken.ebsm"
    path.write_text("machine\n")
    with pytest.raises(ModelSourceError):
        load_model(path)


def test_deterministic():
    src = MINI.replace("x = 0", "x = ")
    assert parse_model(src) == parse_model(src)


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet=st.sampled_from(list("machine statev:=0..9{}()<->\"-\n_ABxTRUEFALSE,")),
               max_size=200))
def test_parse_is_total(src):
    result = parse_model(src)
    assert isinstance(result, (Model, list))
    if isinstance(result, list):
        assert result and all(d.is_error or d.severity == "warning" for d in result)
        lines = src.count("\n") + 1
        assert all(1 <= d.line <= lines for d in result)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, len(MINI)), st.integers(1, 20))
def test_truncations_are_total(cut, width):
    src = MINI[:cut] + MINI[cut + width:]
    result = parse_model(src)
    assert isinstance(result, (Model, list))


# -- guidance ----------------------------------------------------------------

def test_guidance_exact(stop_start):
    g = parse_guidance(
        '{"n": 4000, "transitions": {"EngMode.s5": {"mode":"exact","q":3990}}}', stop_start)
    assert g.n == 4000
    assert g.gate("EngMode", "s5") == Gate("exact", 3990)
    assert g.gate("EngMode", "s6") is None
    assert Gate("exact", 3990).admits(3990)
    assert not Gate("exact", 3990).admits(3989)


def test_guidance_empty():
    g = parse_guidance('{"n": 1, "transitions": {}}')
    assert g.n == 1 and g.gates == {}


def test_guidance_default_n():
    assert parse_guidance("{}").n == 4000


def test_guidance_threshold_full_range():
    g = parse_guidance('{"n": 100, "transitions": {"EngMode.s1": {"mode":"threshold","q":99}}}')
    gate = g.gate("EngMode", "s1")
    # r <= 99 over r in 0..100 admits all but the top value
    assert [r for r in range(101) if not gate.admits(r)] == [100]
    full = parse_guidance('{"n": 100, "transitions": {"EngMode.s1": {"mode":"threshold","q":100}}}')
    assert all(full.gate("EngMode", "s1").admits(r) for r in range(101))


@pytest.mark.parametrize("src, code", [
    ("[1]", "syntax"),
    ("{", "syntax"),
    ('{"n": 0}', "bad-n"),
    ('{"n": true}', "bad-n"),
    ('{"transitions": {"bad": {"mode": "exact", "q": 1}}}', "bad-key"),
    ('{"transitions": {"A.b": {"mode": "fuzzy", "q": 1}}}', "bad-mode"),
    ('{"transitions": {"A.b": {"mode": "exact", "q": -1}}}', "bad-q"),
    ('{"n": 10, "transitions": {"A.b": {"mode": "exact", "q": 11}}}', "q-range"),
    ('{"n": 10, "n": 11}', "duplicate-key"),
])
def test_guidance_errors(src, code):
    diags = parse_guidance(src)
    assert isinstance(diags, list)
    assert code in codes(diags)


def test_guidance_error_position():
    src = '{\n "n": 10,\n "transitions": {\n  "A.b": {"mode": "exact", "q": 11}\n }\n}'
    (d,) = parse_guidance(src)
    assert (d.line, d.column) == (4, 3)


def test_guidance_unknown_transition_warns(stop_start):
    g = parse_guidance('{"transitions": {"EngMode.nonexistent": {"mode":"exact","q":1}}}',
                       stop_start)
    assert g.gates == {}
    assert [w.code for w in g.warnings] == ["unknown-transition"]


def test_bundled_guidance(run1_guidance, run2_guidance, stop_start):
    env_keys = {f"{sm.name}.{t.name}" for sm in stop_start.statemachines
                if sm.kind == "environment" for t in sm.transitions}
    assert set(run1_guidance.gates) == env_keys
    assert all(g.mode == "exact" for g in run1_guidance.gates.values())
    qs = [g.q for g in run1_guidance.gates.values()]
    assert len(set(qs)) == len(qs)
    assert run2_guidance.gate("EngMode", "s4").mode == "threshold"


@settings(max_examples=200, deadline=None)
@given(st.recursive(
    st.one_of(st.none(), st.booleans(), st.integers(-5, 5000), st.text(max_size=8)),
    lambda inner: st.one_of(st.lists(inner, max_size=3),
                            st.dictionaries(st.text(max_size=8), inner, max_size=3)),
    max_leaves=8))
def test_guidance_is_total(doc):
    result = parse_guidance(json.dumps(doc))
    assert isinstance(result, list) or result.n >= 1
