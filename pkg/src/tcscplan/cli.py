"""Command-line driver: screen, build, solve and report."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path

from . import reports
from .builder import PlanningModel, build_planning_model, expected_size, extract_breakdown
from .case import CaseError, PlanningScenario, PowerCase, ScenarioError, load_scenario, read_case
from .network import NetworkError, candidate_scores, rank_candidates
from .solver import KERNEL_BACKEND, MilpResult, branch_and_bound, solve_lp
from .solver.bnb import OPTIMAL, presolved_bounds
from .solver.lp import FEASIBILITY_TOL, INTEGRALITY_TOL

log = logging.getLogger("tcscplan")

MODES = ("plan", "evaluate-fixed-placement", "screen-only", "no-tcsc-baseline")
EXIT_OK, EXIT_SOLVER, EXIT_INPUT = 0, 1, 2


@dataclass
class RunConfig:
    case: Path
    scenario: Path
    mode: str = "plan"
    candidates: list[int] | None = None
    screen: int | None = None
    fix: Path | None = None
    gap: float = 1e-4
    time_limit: float = math.inf
    node_limit: int = 1_000_000
    out: Path = Path("out")
    compare: bool = False
    export_lp: bool = True


class InputError(Exception):
    pass


# ---------------------------------------------------------------- inputs

def _load(config: RunConfig) -> tuple[PowerCase, PlanningScenario]:
    for p in (config.case, config.scenario):
        if not Path(p).is_file():
            raise InputError(f"no such file: {p}")
    case = read_case(config.case)
    return case, load_scenario(Path(config.scenario), case)


def _candidates(case: PowerCase, scenario: PlanningScenario, config: RunConfig) -> list[int]:
    if config.candidates is not None:
        cands = list(config.candidates)
    elif config.screen is not None:
        score = candidate_scores(case, scenario)
        cands = rank_candidates(case, score)[:config.screen]
    else:
        cands = list(scenario.candidates)
    active = {br.id for br in case.active_branches}
    unknown = [k for k in cands if k not in active]
    if unknown:
        raise InputError(f"candidate branches not in service: {unknown}")
    return cands


def read_placement(path: Path) -> dict[int, int]:
    """Branches to install, from a placement.csv or a plain list of branch ids."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if lines and "branch" in lines[0] and "delta" in lines[0]:
        head = [h.strip() for h in lines[0].split(",")]
        ib, idl = head.index("branch"), head.index("delta")
        out = {}
        for ln in lines[1:]:
            cols = [c.strip() for c in ln.split(",")]
            out[int(cols[ib])] = int(round(float(cols[idl])))
        return out
    ids = [int(tok) for tok in re.split(r"[,\s]+", " ".join(lines)) if tok]
    return dict.fromkeys(ids, 1)


# ---------------------------------------------------------------- solving

def _fixed_model(model: PlanningModel, placement: dict[int, int]) -> PlanningModel:
    lb, ub = model.lb.copy(), model.ub.copy()
    for cd in model.candidates:
        col = model.registry.col("delta", cd.branch_id)
        lb[col] = ub[col] = float(placement.get(cd.branch_id, 0))
    lb, ub = presolved_bounds(model, lb, ub)
    return dataclasses.replace(model, lb=lb, ub=ub)


def first_infeasible_state(case: PowerCase, scenario: PlanningScenario, candidates: list[int],
                           placement: dict[int, int] | None) -> str | None:
    """Name the first state whose own LP relaxation is infeasible."""
    for t, lv in enumerate(scenario.levels):
        for c in range(len(scenario.contingencies) + 1):
            conts = scenario.contingencies[c - 1:c] if c else ()
            sub = dataclasses.replace(
                scenario, contingencies=conts,
                levels=(dataclasses.replace(lv, contingency_hours=(1.0,) * len(conts)),))
            model = build_planning_model(case, sub, candidates)
            if placement is not None:
                model = _fixed_model(model, placement)
            if solve_lp(model, lb=model.lb, ub=model.ub).status == "infeasible":
                if c == 0:
                    return f"level {lv.name!r} base state"
                return (f"level {lv.name!r} contingency {c} "
                        f"(outage of branch {scenario.contingencies[c - 1]})")
    return None


def _solve(model: PlanningModel, config: RunConfig, log_lines: list[str]) -> MilpResult:
    return branch_and_bound(model, gap_tol=config.gap, node_limit=config.node_limit,
                            time_limit=config.time_limit, log_fn=log_lines.append)


def _emit(out: Path, model: PlanningModel, result: MilpResult, config: RunConfig,
          mode: str, log_lines: list[str], candidates: list[int]) -> dict | None:
    out.mkdir(parents=True, exist_ok=True)
    header = [f"# tcscplan solver log: mode={mode}",
              f"# integrality_tol={INTEGRALITY_TOL:g} feasibility_tol={FEASIBILITY_TOL:g} "
              f"gap_tol={config.gap:g} kernels={KERNEL_BACKEND}",
              f"# rows={model.n_rows} columns={model.n_cols} binaries={int(model.integer.sum())}"]
    body = result.log if result.log else log_lines
    footer = [f"# status={result.status} objective={result.objective:.10g} "
              f"bound={result.bound:.10g} gap={result.gap:.3g} nodes={result.nodes} "
              f"time_s={result.wall_time:.3f}"]
    (out / "solver.log").write_text("\n".join(header + list(body) + footer) + "\n", encoding="utf-8")
    if config.export_lp:
        model.write_lp(out / "model.lp")
    summary = {
        "mode": mode, "status": result.status, "objective_usd": result.objective,
        "bound_usd": result.bound, "relative_gap": result.gap, "nodes": result.nodes,
        "wall_time_s": result.wall_time, "candidates": candidates,
        "tolerances": {"integrality": INTEGRALITY_TOL, "feasibility": FEASIBILITY_TOL,
                       "gap": config.gap},
        "size": {"rows": model.n_rows, "columns": model.n_cols,
                 "binaries": int(model.integer.sum())},
    }
    tables = None
    if result.x is not None:
        bd = extract_breakdown(model, result.x)
        tables = reports.write_tables(out, bd, model)
        summary["installed"] = [k for k, v in bd.placement.items() if v]
        summary["annual_usd"] = {label: value for label, value in bd.annual_rows()}
    reports.write_json(out / "summary.json", summary)
    return tables


def _run_fixed_or_plan(config: RunConfig, mode: str, out: Path,
                       placement: dict[int, int] | None) -> tuple[int, dict | None]:
    case, scenario = _load(config)
    cands = _candidates(case, scenario, config)
    if placement is not None:
        extra = [k for k, v in placement.items() if v and k not in cands]
        if extra:
            raise InputError(f"placement branches {extra} are not candidates {cands}")
    model = build_planning_model(case, scenario, cands)
    log.info("%s: %d rows, %d columns, %d binaries", mode, model.n_rows, model.n_cols,
             int(model.integer.sum()))
    solve_model = model if placement is None else _fixed_model(model, placement)
    lines: list[str] = []
    result = _solve(solve_model, config, lines)
    tables = _emit(out, model, result, config, mode, lines, cands)
    if result.status == "infeasible":
        where = first_infeasible_state(case, scenario, cands, placement)
        print(f"error: model is infeasible; first infeasible state: {where or 'none on its own'}",
              file=sys.stderr)
        return EXIT_SOLVER, tables
    if result.status != OPTIMAL:
        print(f"warning: solver stopped with status {result.status} "
              f"(gap {result.gap:.3g})", file=sys.stderr)
        return EXIT_SOLVER, tables
    return EXIT_OK, tables


def run_plan(config: RunConfig) -> int:
    """Choose placements; writes reports into ``config.out``."""
    if config.compare:
        return _compare(config, "plan", None)
    return _run_fixed_or_plan(config, "plan", Path(config.out), None)[0]


def run_evaluate(config: RunConfig, placement: dict[int, int]) -> int:
    """Solve with every placement binary fixed; writes the same reports."""
    if config.compare:
        return _compare(config, "evaluate-fixed-placement", placement)
    return _run_fixed_or_plan(config, "evaluate-fixed-placement", Path(config.out), placement)[0]


def run_baseline(config: RunConfig) -> int:
    return _run_fixed_or_plan(config, "no-tcsc-baseline", Path(config.out), {})[0]


def _compare(config: RunConfig, mode: str, placement: dict[int, int] | None) -> int:
    out = Path(config.out)
    code_b, base = _run_fixed_or_plan(config, "no-tcsc-baseline", out / "baseline", {})
    code_p, with_ = _run_fixed_or_plan(config, mode, out / mode, placement)
    if base and with_:
        reports.write_csv(out / "state_costs.csv",
                          reports.compare_rows(base["state_costs.csv"], with_["state_costs.csv"], 4))
        reports.write_csv(out / "annual_summary.csv",
                          reports.compare_rows(base["annual_summary.csv"], with_["annual_summary.csv"], 1))
    return max(code_b, code_p)


def run_screen(config: RunConfig) -> int:
    case, scenario = _load(config)
    score = candidate_scores(case, scenario)
    ranked = rank_candidates(case, score)
    count = config.screen if config.screen is not None else len(ranked)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [["rank", "branch", "from_bus", "to_bus", "score"]]
    for i, k in enumerate(ranked[:count], start=1):
        br = case.branch(k)
        rows.append([i, k, br.from_bus, br.to_bus, reports.sig6(score[k])])
    reports.write_csv(out / "screening.csv", rows)
    reports.write_json(out / "summary.json", {"mode": "screen-only", "status": "ok",
                                              "candidates": ranked[:count]})
    return EXIT_OK


def run(config: RunConfig) -> int:
    if config.mode not in MODES:
        raise InputError(f"unknown mode {config.mode!r}")
    if config.mode == "screen-only":
        return run_screen(config)
    if config.mode == "no-tcsc-baseline":
        return run_baseline(config)
    if config.mode == "evaluate-fixed-placement":
        if config.fix is None:
            raise InputError("evaluate-fixed-placement needs --fix")
        return run_evaluate(config, read_placement(config.fix))
    return run_plan(config)


# ---------------------------------------------------------------- argparse

def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in re.split(r"[,\s]+", text.strip()) if tok]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tcscplan", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="screen, plan or evaluate a case")
    r.add_argument("--case", required=True, type=Path, help="MATPOWER case file")
    r.add_argument("--scenario", required=True, type=Path, help="scenario TOML file")
    r.add_argument("--mode", choices=MODES, default="plan")
    pick = r.add_mutually_exclusive_group()
    pick.add_argument("--candidates", type=_int_list, help="comma-separated branch ids")
    pick.add_argument("--screen", type=int, metavar="N", help="use the N best screened branches")
    r.add_argument("--fix", type=Path, help="placement file (placement.csv or branch ids)")
    r.add_argument("--gap", type=float, default=1e-4, help="relative gap tolerance")
    r.add_argument("--time-limit", type=float, default=math.inf, help="seconds")
    r.add_argument("--node-limit", type=int, default=1_000_000)
    r.add_argument("--out", type=Path, default=Path("out"))
    r.add_argument("--compare", action="store_true", help="also run the no-TCSC baseline and join tables")
    r.add_argument("--no-lp", action="store_true", help="skip the model.lp export")

    g = sub.add_parser("generate", help="write a seeded random test instance")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--buses", type=int, default=6)
    g.add_argument("--candidates", type=int, default=3)
    g.add_argument("--contingencies", type=int, default=2)
    g.add_argument("--levels", type=int, default=2)
    g.add_argument("--rating-scale", type=float, default=1.0)
    g.add_argument("--out", type=Path, default=Path("instance"))

    s = sub.add_parser("size", help="print closed-form model size")
    s.add_argument("--case", required=True, type=Path)
    s.add_argument("--scenario", required=True, type=Path)
    s.add_argument("--candidates", type=int, help="candidate count (default: scenario's)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "generate":
            from .generate import write_test_instance
            paths = write_test_instance(args.out, args.seed, buses=args.buses,
                                        candidates=args.candidates,
                                        contingencies=args.contingencies, levels=args.levels,
                                        rating_scale=args.rating_scale)
            print("\n".join(paths))
            return EXIT_OK
        if args.command == "size":
            case = read_case(args.case)
            sc = load_scenario(args.scenario, case)
            k = len(sc.candidates) if args.candidates is None else args.candidates
            for key, v in expected_size(case, sc, k).items():
                print(f"{key} {v}")
            return EXIT_OK
        config = RunConfig(args.case, args.scenario, args.mode, args.candidates, args.screen,
                           args.fix, args.gap, args.time_limit, args.node_limit, args.out,
                           args.compare, not args.no_lp)
        code = run(config)
        print(f"wrote {config.out}" + ("" if code == EXIT_OK else f" (exit {code})"))
        return code
    except (InputError, CaseError, ScenarioError, NetworkError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
