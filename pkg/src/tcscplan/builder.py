"""Assembly of the TCSC planning MILP.

Column units: flows, generation, adjustments and shedding are in p.u. on
the case MVA base; angles and ``z`` in rad; ``w`` in p.u. Objective
coefficients are annual dollars per unit of the column.

Closed-form sizes for ``B`` buses, ``L`` in-service branches, ``G``
online generators, ``D`` loads, ``K`` candidates, ``T`` levels and ``C``
contingencies (``S = T * (1 + C)`` states)::

    columns = S*(B + L + G + 3K) + T*C*(2G + D) + K
    rows    = S*(2L + B + 8K) + T*C*G
    binaries = K + S*K
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .case import PlanningScenario, PowerCase, StateIndex, enumerate_states, Branch
from .model import MilpModel, RowBuilder, VariableRegistry
from .network import (TcscCandidate, branch_susceptance, big_m_outage, make_candidate,
                      recover_tcsc_reactance)

log = logging.getLogger(__name__)

IT_COEFFS = (0.0015, -0.713, 153.75)


class ModelError(ValueError):
    pass


# ---------------------------------------------------------------- economics

def investment_cost(s_t: float, *, floor: float = 5.0, coeffs=IT_COEFFS) -> float:
    """TCSC unit cost in $/kVar for a device of ``s_t`` Mvar."""
    if s_t <= 0:
        raise ValueError(f"TCSC rating must be positive, got {s_t}")
    a, b, c = coeffs
    cost = a * s_t * s_t + b * s_t + c
    if cost <= 0:
        log.warning("unit cost %.4g $/kVar at %.4g Mvar is nonpositive; using floor %g",
                    cost, s_t, floor)
        return floor
    return cost


def capital_recovery_factor(d: float, lifetime: float) -> float:
    g = (1.0 + d) ** lifetime
    return d * g / (g - 1.0)


def annualize(unit_cost: float, s_t: float, d: float = 0.05, lifetime: float = 5) -> float:
    """Annual payment ($/yr) for ``s_t`` Mvar bought at ``unit_cost`` $/kVar."""
    return unit_cost * s_t * 1000.0 * capital_recovery_factor(d, lifetime)


def tcsc_rating(branch: Branch, base_mva: float, *, override: float | None = None,
                compensation: float = 0.7) -> float:
    """Device size in Mvar: full compensation Var at the branch thermal rating."""
    if override is not None:
        return float(override)
    if branch.rating is None or branch.rating <= 0:
        raise ValueError(f"branch {branch.id} has no thermal rating")
    return compensation * branch.x * (branch.rating / base_mva) ** 2 * base_mva


def annual_investment(branch: Branch, case: PowerCase, scenario: PlanningScenario) -> tuple[float, float]:
    s_t = tcsc_rating(branch, case.base_mva, override=scenario.tcsc_ratings.get(branch.id),
                      compensation=abs(scenario.compensation_lower))
    unit = investment_cost(s_t, floor=scenario.cost_floor)
    return s_t, annualize(unit, s_t, scenario.interest_rate, scenario.lifetime)


# ---------------------------------------------------------------- constraints

def build_flow_constraints(state: StateIndex, branch: Branch, registry: VariableRegistry,
                           rows: RowBuilder, *, theta_max: float, candidate: TcscCandidate | None = None,
                           big_m_out: float | None = None, bus_col=None) -> list[int]:
    """Flow-definition rows for ``branch`` in ``state``; returns the row ids.

    Plain branches get the two outage-disjunctive rows. Candidates also get
    ``w`` in the flow rows, the two big-M envelope pairs selected by ``y``
    and the four rows linearising ``z = delta * theta``.
    """
    c, t, k = state.state, state.level, branch.id
    n_k = state.status(k)
    if bus_col is None:
        def bus_col(bus):
            return registry.col("theta", bus, c, t)
    p = registry.col("P", k, c, t)
    ti, tj = bus_col(branch.from_bus), bus_col(branch.to_bus)
    b = branch_susceptance(branch.x)
    if big_m_out is None:
        big_m_out = big_m_outage(branch, candidate is not None, theta_max)
    slack = big_m_out * (1 - n_k)
    flow = [(p, 1.0), (ti, -b), (tj, b)]
    tag = f"k{k}_c{c}_t{t}"
    if candidate is None:
        return [rows.add(flow, ">", -slack, f"flow_lo_{tag}"),
                rows.add(flow, "<", slack, f"flow_hi_{tag}")]

    w, z, y = (registry.col(s, k, c, t) for s in ("w", "z", "y"))
    d = registry.col("delta", k)
    bmin, bmax, m = candidate.b_min, candidate.b_max, candidate.big_m_envelope or candidate.big_m
    flow = flow + [(w, -1.0)]
    out = [rows.add(flow, ">", -slack, f"flow_lo_{tag}"),
           rows.add(flow, "<", slack, f"flow_hi_{tag}"),
           # -M y + z bmin <= w <= z bmax + M y
           rows.add([(w, 1.0), (z, -bmin), (y, m)], ">", 0.0, f"env1_lo_{tag}"),
           rows.add([(w, 1.0), (z, -bmax), (y, -m)], "<", 0.0, f"env1_hi_{tag}"),
           # -M (1-y) + z bmax <= w <= z bmin + M (1-y)
           rows.add([(w, 1.0), (z, -bmax), (y, -m)], ">", -m, f"env2_lo_{tag}"),
           rows.add([(w, 1.0), (z, -bmin), (y, m)], "<", m, f"env2_hi_{tag}"),
           # -N delta thmax <= z <= N delta thmax
           rows.add([(z, 1.0), (d, -n_k * theta_max)], "<", 0.0, f"zdel_hi_{tag}"),
           rows.add([(z, 1.0), (d, n_k * theta_max)], ">", 0.0, f"zdel_lo_{tag}"),
           # N (theta - (1-delta) thmax) <= z <= N (theta + (1-delta) thmax)
           rows.add([(z, 1.0), (ti, -n_k), (tj, n_k), (d, -n_k * theta_max)], ">",
                    -n_k * theta_max, f"zth_lo_{tag}"),
           rows.add([(z, 1.0), (ti, -n_k), (tj, n_k), (d, n_k * theta_max)], "<",
                    n_k * theta_max, f"zth_hi_{tag}")]
    return out


@dataclass
class PlanningModel(MilpModel):
    case: PowerCase | None = None
    scenario: PlanningScenario | None = None
    candidates: tuple[TcscCandidate, ...] = ()
    investment: dict[int, float] = field(default_factory=dict)


def build_planning_model(case: PowerCase, scenario: PlanningScenario,
                         candidates: Sequence[int] | None = None) -> PlanningModel:
    """Build the full multi-state planning MILP.

    ``candidates`` defaults to ``scenario.candidates``; an empty list gives
    a plain multi-state dispatch LP.
    """
    if candidates is None:
        candidates = scenario.candidates
    active = {br.id: br for br in case.active_branches}
    for k in tuple(candidates) + tuple(scenario.contingencies):
        if k not in active:
            raise ModelError(f"branch {k} is not an in-service branch of {case.name}")
    if len(scenario.levels[0].contingency_hours) != len(scenario.contingencies):
        raise ModelError("scenario levels and contingency list disagree")

    base = case.base_mva
    gens = case.online_generators
    states = enumerate_states(scenario, case)
    theta_max = scenario.theta_max
    bus_box = len(case.buses) * theta_max
    ref = case.reference_bus
    cands: dict[int, TcscCandidate] = {}
    investment: dict[int, float] = {}
    for k in candidates:
        s_t, ai = annual_investment(active[k], case, scenario)
        cands[k] = make_candidate(active[k], scenario, s_t)
        investment[k] = ai

    reg = VariableRegistry()
    reg.states = states
    rows = RowBuilder()
    cost: list[float] = []

    def add(symbol, idx, c=None, t=None, *, lb, ub, obj=0.0, integer=False):
        col = reg.add(symbol, idx, c, t, lb=lb, ub=ub, integer=integer)
        cost.append(obj)
        return col

    for k in candidates:
        add("delta", k, lb=0.0, ub=1.0, obj=investment[k], integer=True)

    implications: dict[int, list[int]] = {reg.col("delta", k): [] for k in candidates}
    links: list[tuple[int, int]] = []
    for st in states:
        c, t = st.state, st.level
        lv = scenario.levels[t]
        hours = st.duration
        cont = c > 0
        rating_factor = scenario.short_term_rating_factor if cont else 1.0
        for bus in case.buses:
            box = 0.0 if bus.id == ref else bus_box
            add("theta", bus.id, c, t, lb=-box, ub=box)
        for br in case.active_branches:
            lim = st.status(br.id) * rating_factor * br.rating / base
            add("P", br.id, c, t, lb=-lim, ub=lim)
        for g in gens:
            pmin = g.p_min / base if scenario.honor_pmin else 0.0
            add("Pg", g.id, c, t, lb=min(pmin, g.p_max / base), ub=g.p_max / base,
                obj=hours * g.cost * base)
        if cont:
            for g in gens:
                add("dPup", g.id, c, t, lb=0.0, ub=g.ramp_up / base,
                    obj=hours * scenario.up_cost_factor * g.cost * base)
                add("dPdn", g.id, c, t, lb=0.0, ub=g.ramp_down / base,
                    obj=hours * scenario.down_cost_factor * g.cost * base)
            for ld in case.loads:
                add("dPd", ld.id, c, t, lb=0.0, ub=max(ld.p_d * lv.scale, 0.0) / base,
                    obj=hours * scenario.load_shedding_cost * base)
        for k, cd in cands.items():
            n_k = st.status(k)
            wc = add("w", k, c, t, lb=-cd.big_m, ub=cd.big_m)
            zc = add("z", k, c, t, lb=-theta_max, ub=theta_max)
            # y is vacuous on an outaged branch
            yc = add("y", k, c, t, lb=0.0, ub=float(n_k), integer=True)
            implications[reg.col("delta", k)] += [wc, zc, yc]
            if n_k:
                # flow and angle share a sign since b + b_min > 0
                links.append((yc, reg.col("P", k, c, t)))

        for br in case.active_branches:
            build_flow_constraints(st, br, reg, rows, theta_max=theta_max,
                                   candidate=cands.get(br.id),
                                   big_m_out=cands[br.id].big_m_outage if br.id in cands else None)

        # nodal balance: generation + shedding - outgoing + incoming = demand
        terms: dict[int, list] = {b.id: [] for b in case.buses}
        demand = dict.fromkeys(terms, 0.0)
        for g in gens:
            terms[g.bus].append((reg.col("Pg", g.id, c, t), 1.0))
        for ld in case.loads:
            demand[ld.bus] += ld.p_d * lv.scale / base
            if cont:
                terms[ld.bus].append((reg.col("dPd", ld.id, c, t), 1.0))
        for br in case.active_branches:
            p = reg.col("P", br.id, c, t)
            terms[br.from_bus].append((p, -1.0))
            terms[br.to_bus].append((p, 1.0))
        for bus in case.buses:
            rows.add(terms[bus.id], "=", demand[bus.id], f"bal_i{bus.id}_c{c}_t{t}")

        if cont:
            for g in gens:
                rows.add([(reg.col("Pg", g.id, c, t), 1.0), (reg.col("Pg", g.id, 0, t), -1.0),
                          (reg.col("dPup", g.id, c, t), -1.0), (reg.col("dPdn", g.id, c, t), 1.0)],
                         "=", 0.0, f"ramp_n{g.id}_c{c}_t{t}")

    model = PlanningModel.from_parts(
        reg, rows, cost,
        primary=np.array([reg.col("delta", k) for k in candidates], dtype=int),
        implications=implications,
        sign_links=np.array(links, dtype=int).reshape(-1, 2))
    model.case, model.scenario = case, scenario
    model.candidates = tuple(cands.values())
    model.investment = investment
    return model


def expected_size(case: PowerCase, scenario: PlanningScenario, n_candidates: int) -> dict[str, int]:
    """Column/row/binary counts predicted by the closed-form size formulas."""
    b, l = len(case.buses), len(case.active_branches)
    g, d = len(case.online_generators), len(case.loads)
    t, c, k = len(scenario.levels), len(scenario.contingencies), n_candidates
    s = t * (1 + c)
    return {"columns": s * (b + l + g + 3 * k) + t * c * (2 * g + d) + k,
            "rows": s * (2 * l + b + 8 * k) + t * c * g,
            "binaries": k + s * k}


# ---------------------------------------------------------------- reporting

@dataclass
class StateCost:
    level: int
    state: int
    outaged: int | None
    duration: float
    generation: float        # $/h
    rescheduling: float      # $/h (0 in base states)
    shedding: float          # $/h
    shed_mw: float
    redispatch_mw: float


@dataclass
class CostBreakdown:
    states: list[StateCost]
    normal_generation: float
    contingency_generation: float
    rescheduling: float
    shedding: float
    investment: float
    placement: dict[int, int]
    setpoints: dict[tuple[int, int, int], float | None]

    @property
    def total(self) -> float:
        return (self.normal_generation + self.contingency_generation + self.rescheduling
                + self.shedding + self.investment)

    def annual_rows(self) -> list[tuple[str, float | None]]:
        return [("Generation cost in normal state", self.normal_generation),
                ("Generation cost in contingency", self.contingency_generation),
                ("Rescheduling cost", self.rescheduling),
                ("Load shedding cost", self.shedding),
                ("Investment on TCSC", self.investment if any(self.placement.values()) else None),
                ("Total cost", self.total)]


def net_adjustments(model: PlanningModel, x: np.ndarray) -> np.ndarray:
    """Replace simultaneous up/down adjustments by their signed net."""
    reg = model.registry
    x = x.copy()
    for st in reg.states:
        if st.state == 0:
            continue
        for g in model.case.online_generators:
            u = reg.col("dPup", g.id, st.state, st.level)
            d = reg.col("dPdn", g.id, st.state, st.level)
            net = x[u] - x[d]
            x[u], x[d] = max(net, 0.0), max(-net, 0.0)
    return x


def extract_breakdown(model: PlanningModel, x: np.ndarray, scenario: PlanningScenario | None = None,
                      *, theta_tol: float = 1e-9) -> CostBreakdown:
    """Per-state hourly costs, annual category totals and device setpoints."""
    scenario = scenario or model.scenario
    case, reg = model.case, model.registry
    base = case.base_mva
    x = net_adjustments(model, np.asarray(x, dtype=float))
    gens = case.online_generators
    placement = {cd.branch_id: int(round(x[reg.col("delta", cd.branch_id)])) for cd in model.candidates}
    states = []
    totals = dict(normal=0.0, cont=0.0, resched=0.0, shed=0.0)
    for st in reg.states:
        c, t = st.state, st.level
        gen = sum(g.cost * x[reg.col("Pg", g.id, c, t)] * base for g in gens)
        res = shed = shed_mw = moved = 0.0
        if c > 0:
            for g in gens:
                up = x[reg.col("dPup", g.id, c, t)] * base
                dn = x[reg.col("dPdn", g.id, c, t)] * base
                res += g.cost * (scenario.up_cost_factor * up + scenario.down_cost_factor * dn)
                moved += up + dn
            shed_mw = sum(x[reg.col("dPd", ld.id, c, t)] for ld in case.loads) * base
            shed = scenario.load_shedding_cost * shed_mw
            totals["cont"] += st.duration * gen
            totals["resched"] += st.duration * res
            totals["shed"] += st.duration * shed
        else:
            totals["normal"] += st.duration * gen
        states.append(StateCost(t, c, st.outaged, st.duration, gen, res, shed, shed_mw, moved))

    setpoints: dict[tuple[int, int, int], float | None] = {}
    for cd in model.candidates:
        if not placement[cd.branch_id]:
            continue
        br = case.branch(cd.branch_id)
        for st in reg.states:
            key = (cd.branch_id, st.state, st.level)
            if not st.status(cd.branch_id):
                setpoints[key] = None
                continue
            th = x[reg.col("theta", br.from_bus, st.state, st.level)] - \
                x[reg.col("theta", br.to_bus, st.state, st.level)]
            if abs(th) <= theta_tol:
                setpoints[key] = None
                continue
            b_v = min(max(x[reg.col("w", *key)] / th, cd.b_min), cd.b_max)
            setpoints[key] = recover_tcsc_reactance(br.x, b_v)
    investment = sum(model.investment[k] for k, on in placement.items() if on)
    return CostBreakdown(states, totals["normal"], totals["cont"], totals["resched"],
                         totals["shed"], investment, placement, setpoints)
