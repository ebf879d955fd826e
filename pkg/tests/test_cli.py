import csv
import json
from importlib import resources

import pytest

from tcscplan import build_planning_model, load_scenario, read_case
from tcscplan.cli import main
from tcscplan.solver import brute_force

DATA = resources.files("tcscplan") / "data"
CASE = str(DATA / "demo5.m")
SCEN = str(DATA / "demo5.toml")
TABLES = ["state_costs.csv", "annual_summary.csv", "load_shedding.csv", "rescheduling.csv",
          "placement.csv", "setpoints.csv"]
ANNUAL_LABELS = ["Generation cost in normal state", "Generation cost in contingency",
                 "Rescheduling cost", "Load shedding cost", "Investment on TCSC", "Total cost"]


def run(*args):
    return main(["run", "--case", CASE, "--scenario", SCEN, *map(str, args)])


def rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def compare_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cmp")
    assert run("--compare", "--out", out) == 0
    return out


def test_compare_layout(compare_dir):
    for sub in ("baseline", "plan"):
        for name in TABLES + ["solver.log", "summary.json", "model.lp"]:
            assert (compare_dir / sub / name).is_file()
    annual = rows(compare_dir / "annual_summary.csv")
    assert annual[0] == ["category", "annual_musd_without_tcsc", "annual_musd_with_tcsc"]
    assert [r[0] for r in annual[1:]] == ANNUAL_LABELS
    assert annual[5][1] == "—"


def test_baseline_investment_dash(compare_dir):
    annual = dict((r[0], r[1]) for r in rows(compare_dir / "baseline" / "annual_summary.csv")[1:])
    assert annual["Investment on TCSC"] == "—"


def test_plan_dominates_baseline(compare_dir):
    plan = json.loads((compare_dir / "plan" / "summary.json").read_text())
    base = json.loads((compare_dir / "baseline" / "summary.json").read_text())
    assert plan["objective_usd"] <= base["objective_usd"]
    assert plan["status"] == base["status"] == "optimal-within-gap"


def test_annual_total_is_sum(compare_dir):
    for sub in ("baseline", "plan"):
        annual = json.loads((compare_dir / sub / "summary.json").read_text())["annual_usd"]
        parts = sum(v or 0.0 for k, v in annual.items() if k != "Total cost")
        assert annual["Total cost"] == pytest.approx(parts, rel=1e-9)


def test_figure_csvs(compare_dir):
    sc = load_scenario(SCEN, read_case(CASE))
    for sub in ("baseline", "plan"):
        for name in ("load_shedding.csv", "rescheduling.csv"):
            table = rows(compare_dir / sub / name)
            assert table[0] == ["contingency", "outaged_branch", "peak_mw", "normal_mw", "low_mw"]
            assert len(table) - 1 == len(sc.contingencies)
            assert all(float(v) >= 0 for r in table[1:] for v in r[2:])


def test_solver_log_format(compare_dir):
    lines = (compare_dir / "plan" / "solver.log").read_text().splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    assert body[0] == "node, depth, obj, bound, gap, frac_count"
    assert all(len(ln.split(", ")) == 6 for ln in body[1:])
    assert "integrality_tol=1e-06 feasibility_tol=1e-07" in lines[1]


def test_evaluate_zero_equals_baseline(compare_dir, tmp_path):
    fix = tmp_path / "none.txt"
    fix.write_text("# nothing installed\n")
    assert run("--mode", "evaluate-fixed-placement", "--fix", fix, "--out", tmp_path / "ev") == 0
    for name in TABLES:
        assert (tmp_path / "ev" / name).read_bytes() == (compare_dir / "baseline" / name).read_bytes()


def test_evaluate_plan_placement_reproduces_objective(compare_dir, tmp_path):
    plan = json.loads((compare_dir / "plan" / "summary.json").read_text())
    assert run("--mode", "evaluate-fixed-placement", "--fix", compare_dir / "plan" / "placement.csv",
               "--out", tmp_path) == 0
    ev = json.loads((tmp_path / "summary.json").read_text())
    assert ev["installed"] == plan["installed"]
    assert ev["objective_usd"] == pytest.approx(plan["objective_usd"], rel=1e-9)


def test_screen_only(tmp_path):
    assert run("--mode", "screen-only", "--screen", 3, "--out", tmp_path) == 0
    table = rows(tmp_path / "screening.csv")
    assert table[0] == ["rank", "branch", "from_bus", "to_bus", "score"]
    assert len(table) == 4


def test_missing_file_exit_code(tmp_path, capsys):
    code = main(["run", "--case", str(tmp_path / "nope.m"), "--scenario", SCEN,
                 "--out", str(tmp_path)])
    assert code == 2
    assert "no such file" in capsys.readouterr().err


def test_evaluate_needs_fix(tmp_path):
    assert run("--mode", "evaluate-fixed-placement", "--out", tmp_path) == 2


def test_placement_outside_candidates(tmp_path):
    fix = tmp_path / "fix.txt"
    fix.write_text("3\n")
    assert run("--mode", "evaluate-fixed-placement", "--fix", fix, "--candidates", "1,2",
               "--out", tmp_path / "o") == 2


def test_limit_exit_code(tmp_path):
    assert run("--gap", 0, "--node-limit", 1, "--out", tmp_path) == 1
    assert json.loads((tmp_path / "summary.json").read_text())["status"] == "node-limit"


INFEASIBLE_SCENARIO = """
contingencies = [4]
candidates = [1]
[[levels]]
name = "normal"
scale = 1.0
base_hours = 4000
contingency_hours = [380]
[[levels]]
name = "surge"
scale = 10.0
base_hours = 4000
contingency_hours = [380]
"""


def test_infeasible_names_state(tmp_path, capsys):
    sc = tmp_path / "bad.toml"
    sc.write_text(INFEASIBLE_SCENARIO)
    code = main(["run", "--case", CASE, "--scenario", str(sc), "--out", str(tmp_path / "o")])
    assert code == 1
    assert "first infeasible state: level 'surge' base state" in capsys.readouterr().err


def test_generate_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["generate", "--seed", "1", "--buses", "5", "--out", str(tmp_path / d)]) == 0
    for name in ("case.m", "scenario.toml"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    case = read_case(tmp_path / "a" / "case.m")
    assert len(case.buses) == 5
    load_scenario(tmp_path / "a" / "scenario.toml", case)


def test_generate_huge_ratings_installs_nothing(tmp_path):
    assert main(["generate", "--seed", "4", "--buses", "6", "--rating-scale", "1000",
                 "--out", str(tmp_path / "g")]) == 0
    case = read_case(tmp_path / "g" / "case.m")
    m = build_planning_model(case, load_scenario(tmp_path / "g" / "scenario.toml", case))
    bf = brute_force(m)
    assert not bf.x[m.primary].any()
    code = main(["run", "--case", str(tmp_path / "g" / "case.m"),
                 "--scenario", str(tmp_path / "g" / "scenario.toml"), "--out", str(tmp_path / "o")])
    assert code == 0
    assert json.loads((tmp_path / "o" / "summary.json").read_text())["installed"] == []


def test_size_subcommand(capsys):
    assert main(["size", "--case", CASE, "--scenario", SCEN]) == 0
    out = dict(line.split() for line in capsys.readouterr().out.splitlines())
    assert int(out["binaries"]) == 60
