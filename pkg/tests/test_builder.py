import re
from dataclasses import replace
from importlib import resources

import numpy as np
import pytest

from tcscplan import (build_planning_model, extract_breakdown, load_scenario, parse_matpower_case,
                      read_case)
from tcscplan.builder import (annualize, capital_recovery_factor, expected_size, investment_cost,
                              tcsc_rating)
from tcscplan.case import Branch
from tcscplan.solver import branch_and_bound, brute_force, solve_lp

from test_network import ONE_LEVEL, ring_case

DATA = resources.files("tcscplan") / "data"


# ---------------------------------------------------------------- economics

# 200 Mvar: 60 - 142.6 + 153.75 = 71.15
@pytest.mark.parametrize("s, cost", [(100, 97.45), (1, 153.0385), (200, 71.15)])
def test_investment_cost(s, cost):
    assert investment_cost(s) == pytest.approx(cost, rel=1e-9)


def test_investment_cost_floor(caplog):
    assert investment_cost(10.0, coeffs=(0.0, -20.0, 100.0)) == 5.0
    assert "floor" in caplog.text
    with pytest.raises(ValueError):
        investment_cost(0.0)


def test_capital_recovery():
    assert capital_recovery_factor(0.05, 5) == pytest.approx(0.230975, abs=5e-7)
    # 2,250,851 uses the factor rounded to 0.230975
    assert annualize(97.45, 100) == pytest.approx(97.45 * 100 * 1000 * capital_recovery_factor(0.05, 5))
    assert annualize(97.45, 100) == pytest.approx(2_250_851, rel=1e-6)
    assert capital_recovery_factor(0.05, 500) == pytest.approx(0.05, abs=1e-6)


@pytest.mark.parametrize("x, s, expect", [(0.1, 100, 7.0), (0.2, 200, 56.0)])
def test_tcsc_rating(x, s, expect):
    assert tcsc_rating(Branch(1, 1, 2, x, s), 100.0) == pytest.approx(expect)


def test_tcsc_rating_override():
    assert tcsc_rating(Branch(1, 1, 2, 0.1, 100), 100.0, override=40) == 40


# ---------------------------------------------------------------- envelope

def block(model, k, c=0, t=0):
    """Envelope and z rows of candidate ``k`` as (A, lo, hi, cols)."""
    reg = model.registry
    br = model.case.branch(k)
    cols = [reg.col("theta", br.from_bus, c, t), reg.col("theta", br.to_bus, c, t),
            reg.col("w", k, c, t), reg.col("z", k, c, t), reg.col("y", k, c, t),
            reg.col("delta", k)]
    tag = f"k{k}_c{c}_t{t}"
    names = [f"{p}_{tag}" for p in ("env1_lo", "env1_hi", "env2_lo", "env2_hi",
                                     "zdel_hi", "zdel_lo", "zth_lo", "zth_hi")]
    idx = [model.row_names.index(n) for n in names]
    A = model.A[idx][:, cols].toarray()
    lo, hi = model.row_bounds()
    return A, lo[idx], hi[idx]


def feasible(A, lo, hi, pts, tol=1e-9):
    act = pts @ A.T
    return np.all((act >= lo - tol) & (act <= hi + tol), axis=1)


@pytest.fixture(scope="module")
def ring_model():
    case = ring_case()
    return build_planning_model(case, load_scenario(ONE_LEVEL, case))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_envelope_exactness(ring_model, k):
    rng = np.random.default_rng(k)
    A, lo, hi = block(ring_model, k)
    cd = next(c for c in ring_model.candidates if c.branch_id == k)
    th_max, M = ring_model.scenario.theta_max, cd.big_m
    n = 10_000

    # delta = 1: z must equal theta, and any feasible w has w/theta in [b_min, b_max]
    th = rng.uniform(-th_max, th_max, n)
    y = rng.integers(0, 2, n).astype(float)
    w = rng.uniform(-M, M, n)
    pts = np.column_stack([th, np.zeros(n), w, th, y, np.ones(n)])
    ok = feasible(A, lo, hi, pts) & (np.abs(th) > 1e-9)
    assert ok.sum() > 100
    ratio = w[ok] / th[ok]
    assert np.all(ratio >= cd.b_min - 1e-9) and np.all(ratio <= cd.b_max + 1e-9)
    z_off = pts.copy()
    z_off[:, 3] = th + rng.choice([-1, 1], n) * rng.uniform(1e-4, 0.5, n)
    assert not feasible(A, lo, hi, z_off).any()

    # every (b_V, theta) in the box is representable with y = [theta < 0]
    b_v = rng.uniform(cd.b_min, cd.b_max, n)
    pts = np.column_stack([th, np.zeros(n), b_v * th, th, (th < 0).astype(float), np.ones(n)])
    assert feasible(A, lo, hi, pts).all()

    # delta = 0 forces z = 0 and w = 0 for either y
    z = rng.uniform(-th_max, th_max, n)
    pts = np.column_stack([th, np.zeros(n), w, z, y, np.zeros(n)])
    ok = feasible(A, lo, hi, pts)
    assert not ok.any()
    pts[:, 3] = 0.0
    ok = feasible(A, lo, hi, pts)
    assert np.all(np.abs(w[ok]) <= 1e-9)
    pts[:, 2] = 0.0
    assert feasible(A, lo, hi, pts).all()


def test_bmax_constant_cuts_off_envelope():
    # with M = b_max * theta_max the deselected pair still binds near
    # theta = -theta_max: w = b_max * theta is excluded for y = 1
    case = ring_case()
    sc = load_scenario(ONE_LEVEL, case)
    model = build_planning_model(case, replace(sc, envelope_big_m="bmax"))
    A, lo, hi = block(model, 1)
    cd = model.candidates[0]
    th = -sc.theta_max
    pt = np.array([[th, 0.0, cd.b_max * th, th, 1.0, 1.0]])
    assert not feasible(A, lo, hi, pt).any()
    A, lo, hi = block(build_planning_model(case, sc), 1)
    assert feasible(A, lo, hi, pt).all()


def test_envelope_at_half_radian():
    case = parse_matpower_case(TWO_BUS_X01)
    model = build_planning_model(case, load_scenario("candidates=[1]\n[[levels]]\nbase_hours=8760\n", case))
    A, lo, hi = block(model, 1)
    grid = np.linspace(-20, 20, 400_001)
    feas = np.zeros(grid.size, bool)
    for y in (0.0, 1.0):
        pts = np.column_stack([np.full(grid.size, 0.5), np.zeros(grid.size), grid,
                               np.full(grid.size, 0.5), np.full(grid.size, y), np.ones(grid.size)])
        feas |= feasible(A, lo, hi, pts)
    w = grid[feas]
    assert w.min() == pytest.approx(-0.8333, abs=2e-4)
    assert w.max() == pytest.approx(11.6667, abs=2e-4)


def test_outaged_candidate_rows():
    demo = read_case(DATA / "demo5.m")
    sc = load_scenario(DATA / "demo5.toml", demo)
    model = build_planning_model(demo, sc)
    reg = model.registry
    k = sc.contingencies[0]
    c, t = 1, 0
    A, lo, hi = block(model, k, c, t)
    rng = np.random.default_rng(0)
    n = 2000
    pts = np.column_stack([rng.uniform(-1, 1, n), rng.uniform(-1, 1, n), np.zeros(n),
                           rng.uniform(-1, 1, n), np.zeros(n), np.ones(n)])
    ok = feasible(A, lo, hi, pts)
    assert np.all(np.abs(pts[ok, 3]) <= 1e-12)         # z forced to 0
    # flow rows are slack at P = 0 for any angle difference within 2 theta_max
    p = reg.col("P", k, c, t)
    assert model.lb[p] == model.ub[p] == 0.0
    br = demo.branch(k)
    cd = next(x for x in model.candidates if x.branch_id == k)
    rows = [model.row_names.index(f"flow_{s}_k{k}_c{c}_t{t}") for s in ("lo", "hi")]
    cols = [reg.col("theta", br.from_bus, c, t), reg.col("theta", br.to_bus, c, t),
            reg.col("w", k, c, t)]
    sub = model.A[rows][:, cols].toarray()
    th_max = sc.theta_max
    for d in np.linspace(-2 * th_max, 2 * th_max, 41):
        for w in (-cd.big_m, 0.0, cd.big_m):
            act = sub @ np.array([d, 0.0, w])
            assert act[0] >= model.rhs[rows[0]] - 1e-9
            assert act[1] <= model.rhs[rows[1]] + 1e-9


TWO_BUS_X01 = """
mpc.baseMVA = 100;
mpc.bus = [1 3 0 0 0 0 1 1 0 135 1 1 1; 2 1 50 0 0 0 1 1 0 135 1 1 1];
mpc.gen = [1 0 0 0 0 1 100 1 100 0];
mpc.branch = [1 2 0 0.1 0 40 40 40 0 0 1 -360 360];
mpc.gencost = [2 0 0 2 10 0];
"""


# ---------------------------------------------------------------- model

def test_pure_dcopf_matches_hand_dispatch():
    # 240 MW at bus 3; line 1-3 (100 MW) carries (2 p1 + p2)/3, so p1 = 60
    case = ring_case()
    model = build_planning_model(case, load_scenario(ONE_LEVEL, case), [])
    assert not model.integer.any()
    sol = solve_lp(model)
    assert sol.objective == pytest.approx((60 * 10 + 180 * 50) * 8760, rel=1e-9)
    r = branch_and_bound(model)
    assert r.objective == pytest.approx(sol.objective, rel=1e-12)


def test_two_bus_candidate_not_installed():
    two = TWO_BUS_X01.replace("2 1 50 0", "2 1 90 0").replace(
        "mpc.gen = [1 0 0 0 0 1 100 1 100 0];",
        "mpc.gen = [1 0 0 0 0 1 100 1 100 0; 2 0 0 0 0 1 100 1 100 0];").replace(
        "mpc.gencost = [2 0 0 2 10 0];", "mpc.gencost = [2 0 0 2 10 0; 2 0 0 2 40 0];")
    case = parse_matpower_case(two)
    model = build_planning_model(case, load_scenario("candidates=[1]\n[[levels]]\nbase_hours=8760\n", case))
    bf = brute_force(model, exhaustive=True)
    assert bf.evaluations[(0,)] < bf.evaluations[(1,)]
    assert bf.x[model.primary[0]] == 0


def test_size_formulas_demo():
    demo = read_case(DATA / "demo5.m")
    sc = load_scenario(DATA / "demo5.toml", demo)
    model = build_planning_model(demo, sc)
    size = expected_size(demo, sc, len(sc.candidates))
    assert size == {"columns": model.n_cols, "rows": model.n_rows,
                    "binaries": int(model.integer.sum())}


def test_size_formulas_118_48_states():
    case = read_case(DATA / "case118.m")
    safe = [1, 2, 3, 4, 5, 6, 8, 10, 11, 12, 13, 14, 15, 16, 17]
    cands = list(range(20, 50))
    text = (f"contingencies = {safe}\ncandidates = {cands}\n"
            + "".join(f"[[levels]]\nscale = {s}\nbase_hours = 2890\ncontingency_hours = {[2] * 15}\n"
                      for s in (1.2, 1.0, 0.8)))
    sc = load_scenario(text, case)
    model = build_planning_model(case, sc)
    assert len(model.registry.states) == 48
    size = expected_size(case, sc, 30)
    assert size == {"columns": model.n_cols, "rows": model.n_rows,
                    "binaries": int(model.integer.sum())}
    assert size["binaries"] == 30 + 48 * 30


@pytest.fixture(scope="module")
def demo_solved():
    demo = read_case(DATA / "demo5.m")
    sc = load_scenario(DATA / "demo5.toml", demo)
    model = build_planning_model(demo, sc)
    return model, branch_and_bound(model)


def test_objective_audit(demo_solved):
    model, _ = demo_solved
    reg, case = model.registry, model.case
    for st in reg.states:
        for g in case.online_generators:
            col = reg.col("Pg", g.id, st.state, st.level)
            assert model.c[col] == st.duration * g.cost * case.base_mva
    for cd in model.candidates:
        assert model.c[reg.col("delta", cd.branch_id)] == model.investment[cd.branch_id]


def test_redispatch_identity(demo_solved):
    model, res = demo_solved
    reg, x = model.registry, res.x
    for st in reg.states:
        if st.state == 0:
            continue
        for g in model.case.online_generators:
            c, t = st.state, st.level
            lhs = x[reg.col("Pg", g.id, c, t)] - x[reg.col("Pg", g.id, 0, t)]
            up, dn = x[reg.col("dPup", g.id, c, t)], x[reg.col("dPdn", g.id, c, t)]
            assert lhs == pytest.approx(up - dn, abs=1e-9)
            assert -1e-12 <= up <= g.ramp_up / model.case.base_mva + 1e-12
            assert -1e-12 <= dn <= g.ramp_down / model.case.base_mva + 1e-12


def test_breakdown_accounting(demo_solved):
    model, res = demo_solved
    bd = extract_breakdown(model, res.x)
    parts = [v for label, v in bd.annual_rows()[:-1] if v is not None]
    assert bd.total == pytest.approx(sum(parts), rel=1e-12)
    assert bd.total == pytest.approx(res.objective, rel=1e-9)
    weighted = sum(s.duration * s.generation for s in bd.states if s.state == 0)
    assert weighted == pytest.approx(bd.normal_generation, rel=1e-12)
    for s in bd.states:
        if s.state == 0:
            assert s.rescheduling == 0 and s.shedding == 0
    # installed devices report a setpoint inside the compensation range
    for (k, c, t), xv in bd.setpoints.items():
        if xv is not None:
            x = model.case.branch(k).x
            assert -0.7 * x - 1e-9 <= xv <= 0.2 * x + 1e-9


def test_zero_adjustments_give_zero_rows():
    case = ring_case(load=50.0, rate13=9000, big=9000)
    text = ("contingencies = [1]\ncandidates = [2]\n[[levels]]\nbase_hours = 8700\n"
            "contingency_hours = [60]\n")
    model = build_planning_model(case, load_scenario(text, case))
    res = branch_and_bound(model)
    bd = extract_breakdown(model, res.x)
    for s in bd.states:
        assert s.rescheduling == pytest.approx(0.0, abs=1e-9)
        assert s.shedding == pytest.approx(0.0, abs=1e-9)
    assert bd.placement == {2: 0}
    assert dict(bd.annual_rows())["Investment on TCSC"] is None


# ---------------------------------------------------------------- LP export

def parse_lp(text):
    """Tiny reader for the exported LP text: objective, rows, bounds."""
    sec, obj, rows, bounds = None, {}, [], {}
    term = re.compile(r"([+-])\s*([0-9.eE+-]+)\s+(\w+)")
    for line in text.splitlines():
        s = line.strip()
        if s in ("Minimize", "Subject To", "Bounds", "Binaries", "End"):
            sec = s
            continue
        if sec == "Minimize" and s != "obj:":
            for sg, v, n in term.findall(s):
                obj[n] = float(v) * (1 if sg == "+" else -1)
        elif sec == "Subject To":
            name, body = s.split(":", 1)
            lhs, op, rhs = re.match(r"(.*)\s(<=|>=|=)\s(\S+)$", body).groups()
            rows.append((name, {n: float(v) * (1 if sg == "+" else -1)
                                for sg, v, n in term.findall(lhs)}, op, float(rhs)))
        elif sec == "Bounds":
            lo, n, hi = re.match(r"(\S+) <= (\w+) <= (\S+)", s).groups()
            bounds[n] = (float(lo), float(hi))
    return obj, rows, bounds


def test_lp_export_round_trip(tmp_path):
    demo = read_case(DATA / "demo5.m")
    sc = load_scenario(DATA / "demo5.toml", demo)
    model = build_planning_model(demo, sc)
    path = tmp_path / "m.lp"
    model.write_lp(path)
    obj, rows, bounds = parse_lp(path.read_text())
    idx = {n: j for j, n in enumerate(model.names)}
    assert "P_k1_c0_t0" in idx and "delta_k3" in idx and "y_k6_c2_t2" in idx
    c = np.zeros(model.n_cols)
    for n, v in obj.items():
        c[idx[n]] = v
    assert np.allclose(c, model.c, rtol=1e-15)
    A = model.A.toarray()
    assert len(rows) == model.n_rows
    for i, (name, terms, op, rhs) in enumerate(rows):
        assert name == model.row_names[i]
        row = np.zeros(model.n_cols)
        for n, v in terms.items():
            row[idx[n]] = v
        assert np.array_equal(row, A[i])
        assert rhs == model.rhs[i]
        assert {"<=": "<", ">=": ">", "=": "="}[op] == model.sense[i]
    for n, (lo, hi) in bounds.items():
        assert (lo, hi) == (model.lb[idx[n]], model.ub[idx[n]])
