import math
from importlib import resources

import pytest
from hypothesis import given, strategies as st

from tcscplan import (CaseError, ScenarioError, enumerate_states, load_scenario,
                      parse_matpower_case, read_case)
from tcscplan.case import format_matpower_case, format_scenario

DATA = resources.files("tcscplan") / "data"

TWO_BUS = """
function mpc = two_bus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0  0 0 0 1 1 0 135 1 1.05 0.95;
  2 1 50 0 0 0 1 1 0 135 1 1.05 0.95;
];
mpc.gen = [
  1 0 0 10 -10 1 100 1 100 0;
];
mpc.branch = [
  1 2 0 0.1 0 80 80 80 0 0 1 -360 360;
];
mpc.gencost = [
  2 0 0 2 10 0;
];
"""


def two_bus(**edits):
    text = TWO_BUS
    for old, new in edits.items():
        text = text.replace(old, new)
    return text


def test_minimal_two_bus():
    case = parse_matpower_case(TWO_BUS)
    assert len(case.buses) == 2 and len(case.branches) == 1
    assert len(case.generators) == 1 and len(case.loads) == 1
    assert case.loads[0].p_d == 50
    g = case.generators[0]
    assert (g.p_min, g.p_max, g.cost) == (0, 100, 10)
    assert g.ramp_up == pytest.approx(30.0)     # 0.3 * PMAX default
    br = case.branches[0]
    assert (br.x, br.rating) == (0.1, 80)
    assert case.reference_bus == 1


def test_no_reference_bus():
    with pytest.raises(CaseError, match="no reference bus"):
        parse_matpower_case(two_bus(**{"1 3 0  0": "1 1 0  0"}))


def test_missing_block():
    with pytest.raises(CaseError, match="missing block mpc.gencost"):
        parse_matpower_case(TWO_BUS.split("mpc.gencost")[0])


def test_wrong_column_count():
    with pytest.raises(CaseError):
        parse_matpower_case(two_bus(**{"1 2 0 0.1 0 80 80 80 0 0 1 -360 360": "1 2 0 0.1"}))


def test_nonpositive_reactance():
    with pytest.raises(CaseError, match="reactance"):
        parse_matpower_case(two_bus(**{"1 2 0 0.1 ": "1 2 0 0 "}))


def test_quadratic_only_cost_rejected():
    with pytest.raises(CaseError):
        parse_matpower_case(two_bus(**{"2 0 0 2 10 0;": "2 0 0 3 0.01 0 0;"}))


def test_quadratic_terms_dropped_with_warning(caplog):
    case = parse_matpower_case(two_bus(**{"2 0 0 2 10 0;": "2 0 0 3 0.01 12 0;"}))
    assert case.generators[0].cost == 12
    assert "ignoring cost terms" in caplog.text


def test_out_of_service_branch_not_planned():
    text = two_bus(**{"1 2 0 0.1 0 80 80 80 0 0 1 -360 360;":
                      "1 2 0 0.1 0 80 80 80 0 0 1 -360 360;\n  1 2 0 0.2 0 80 80 80 0 0 0 -360 360;"})
    case = parse_matpower_case(text)
    assert len(case.branches) == 2
    assert [br.id for br in case.active_branches] == [1]


def test_ieee118_counts():
    case = read_case(DATA / "case118.m")
    assert len(case.buses) == 118
    assert len(case.branches) == 186


def test_round_trip_bundled_cases():
    for name in ("demo5.m", "case118.m"):
        case = read_case(DATA / name)
        again = parse_matpower_case(format_matpower_case(case), name=case.name)
        assert again == case


@given(st.floats(0.1, 10), st.floats(0.1, 10))
def test_load_scaling_composes(f, g):
    case = parse_matpower_case(TWO_BUS)
    a = case.scale_loads(f).scale_loads(g).total_load
    b = case.scale_loads(f * g).total_load
    assert a == pytest.approx(b, rel=1e-12)


# ---------------------------------------------------------------- scenarios

# first branches of case118 whose outage keeps the network connected
SAFE_118 = [1, 2, 3, 4, 5, 6, 8, 10, 11, 12, 13, 14, 15, 16, 17]


def scenario_text(base=2910, cont=6, n_cont=5, levels=3, extra="", first_only=True):
    """Five 6 h contingency states on top of 3 x 2910 h base gives 8760 h when
    the contingency hours sit in one level (the others get 0 h states)."""
    ids = ", ".join(str(i) for i in SAFE_118[:n_cont])
    scales = [1.2, 1.0, 0.8]
    body = f"contingencies = [{ids}]\ncandidates = [1]\n{extra}\n"
    for t in range(levels):
        h = cont if t == 0 or not first_only else 0
        hours = ", ".join([str(h)] * n_cont)
        body += (f"[[levels]]\nname = 'l{t}'\nscale = {scales[t]}\nbase_hours = {base}\n"
                 f"contingency_hours = [{hours}]\n")
    return body


@pytest.fixture(scope="module")
def case118():
    return read_case(DATA / "case118.m")


def test_scenario_sums_to_8760(case118):
    sc = load_scenario(scenario_text(), case118)
    assert sc.total_hours == 8760
    assert sc.interest_rate == 0.05 and sc.lifetime == 5
    assert sc.theta_max == pytest.approx(math.pi / 3)
    assert sc.short_term_rating_factor == 1.1
    assert (sc.compensation_lower, sc.compensation_upper) == (-0.7, 0.2)


def test_scenario_8761_rejected(case118):
    with pytest.raises(ScenarioError, match="8760"):
        load_scenario(scenario_text(base=2910, cont=6, extra="") .replace(
            "base_hours = 2910", "base_hours = 2911", 1), case118)


def test_negative_duration(case118):
    with pytest.raises(ScenarioError, match="negative"):
        load_scenario(scenario_text().replace("base_hours = 2910", "base_hours = -1", 1), case118)


def test_unknown_branch(case118):
    with pytest.raises(ScenarioError, match="unknown"):
        load_scenario(scenario_text().replace("candidates = [1]", "candidates = [999]"), case118)


def test_level_scaling(case118):
    sc = load_scenario(scenario_text(), case118)
    scaled = [case118.scale_loads(lv.scale).total_load for lv in sc.levels]
    base = case118.total_load
    assert scaled == pytest.approx([1.2 * base, base, 0.8 * base])


def test_scenario_round_trip(case118):
    sc = load_scenario(scenario_text(), case118)
    assert load_scenario(format_scenario(sc), case118) == sc


def test_states_48(case118):
    # 3 levels x 15 contingencies
    text = scenario_text(base=2920, cont=0.0, n_cont=15)
    states = enumerate_states(load_scenario(text, case118), case118)
    assert len(states) == 48


def test_states_single():
    case = parse_matpower_case(TWO_BUS)
    sc = load_scenario("[[levels]]\nbase_hours = 8760\n", case)
    states = enumerate_states(sc, case)
    assert len(states) == 1
    assert set(states[0].availability.values()) == {1}


def test_states_two_by_two():
    case = read_case(DATA / "demo5.m")
    sc = load_scenario(scenario_text(base=4370, cont=5, n_cont=2, levels=2, first_only=False), case)
    states = enumerate_states(sc, case)
    assert len(states) == 6
    assert sum(s.duration for s in states) == 8760
    for s in states:
        zeros = [k for k, n in s.availability.items() if n == 0]
        assert zeros == ([] if s.is_base else [s.outaged])
