"""CSV and JSON report tables for planning runs."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .builder import CostBreakdown, PlanningModel

DASH = "-"
EM = "—"       # "not applicable" marker in the annual summary


def sig6(v: float) -> str:
    return f"{v:.6g}"


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def state_cost_rows(bd: CostBreakdown, model: PlanningModel) -> list[list]:
    """Per-state hourly costs; base states show dashes for redispatch and shedding."""
    levels = model.scenario.levels
    out = [["level", "state", "outaged_branch", "duration_h", "generation_usd_per_h",
            "rescheduling_usd_per_h", "load_shedding_usd_per_h"]]
    for st in bd.states:
        base = st.state == 0
        out.append([levels[st.level].name, "base" if base else f"c{st.state}",
                    DASH if base else st.outaged, sig6(st.duration), sig6(st.generation),
                    DASH if base else sig6(st.rescheduling),
                    DASH if base else sig6(st.shedding)])
    return out


def annual_rows(bd: CostBreakdown) -> list[list]:
    """Annual category totals in M$, one row per cost category."""
    out = [["category", "annual_musd"]]
    for label, value in bd.annual_rows():
        out.append([label, EM if value is None else sig6(value / 1e6)])
    return out


def _per_contingency(bd: CostBreakdown, model: PlanningModel, attr: str) -> list[list]:
    sc = model.scenario
    names = [lv.name for lv in sc.levels]
    out = [["contingency", "outaged_branch"] + [f"{n}_mw" for n in names]]
    values = {(st.state, st.level): getattr(st, attr) for st in bd.states if st.state > 0}
    for c, k in enumerate(sc.contingencies, start=1):
        out.append([c, k] + [sig6(max(values[(c, t)], 0.0)) for t in range(len(names))])
    return out


def shedding_rows(bd: CostBreakdown, model: PlanningModel) -> list[list]:
    return _per_contingency(bd, model, "shed_mw")


def rescheduling_rows(bd: CostBreakdown, model: PlanningModel) -> list[list]:
    return _per_contingency(bd, model, "redispatch_mw")


def placement_rows(bd: CostBreakdown, model: PlanningModel) -> list[list]:
    case = model.case
    out = [["branch", "from_bus", "to_bus", "delta", "rating_mvar", "annual_investment_usd"]]
    for cd in model.candidates:
        br = case.branch(cd.branch_id)
        out.append([cd.branch_id, br.from_bus, br.to_bus, bd.placement[cd.branch_id],
                    sig6(cd.rating), sig6(model.investment[cd.branch_id])])
    return out


def setpoint_rows(bd: CostBreakdown, model: PlanningModel) -> list[list]:
    """Recovered device reactance per installed device and state (blank when idle)."""
    names = [lv.name for lv in model.scenario.levels]
    out = [["branch", "level", "state", "x_v_pu"]]
    for (k, c, t), xv in sorted(bd.setpoints.items(), key=lambda kv: (kv[0][0], kv[0][2], kv[0][1])):
        out.append([k, names[t], "base" if c == 0 else f"c{c}", "" if xv is None else sig6(xv)])
    return out


def compare_rows(without: list[list], with_: list[list], key_cols: int) -> list[list]:
    """Join two tables row by row, suffixing the value columns."""
    head = without[0][:key_cols]
    head += [f"{h}_without_tcsc" for h in without[0][key_cols:]]
    head += [f"{h}_with_tcsc" for h in with_[0][key_cols:]]
    out = [head]
    for a, b in zip(without[1:], with_[1:]):
        if a[:key_cols] != b[:key_cols]:
            raise ValueError("tables do not line up")
        out.append(a + b[key_cols:])
    return out


def write_tables(out: Path, bd: CostBreakdown, model: PlanningModel) -> dict[str, list[list]]:
    tables = {
        "placement.csv": placement_rows(bd, model),
        "setpoints.csv": setpoint_rows(bd, model),
        "state_costs.csv": state_cost_rows(bd, model),
        "annual_summary.csv": annual_rows(bd),
        "load_shedding.csv": shedding_rows(bd, model),
        "rescheduling.csv": rescheduling_rows(bd, model),
    }
    out.mkdir(parents=True, exist_ok=True)
    for name, rows in tables.items():
        (out / name).write_text(_csv(rows), encoding="utf-8")
    return tables


def write_csv(path: Path, rows: list[list]) -> None:
    path.write_text(_csv(rows), encoding="utf-8")


def write_json(path: Path, data: dict) -> None:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, dict):
            return {str(k): clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        return v
    path.write_text(json.dumps(clean(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")
