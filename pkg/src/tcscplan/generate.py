"""Seeded random planning instances for the oracle test suite."""
from __future__ import annotations

import numpy as np

from .case import (Branch, Bus, Generator, Load, LoadLevel, PlanningScenario, PowerCase,
                   format_matpower_case, format_scenario, validate_scenario)
from .network import dc_power_flow, islanding_branches


class GenerationError(RuntimeError):
    pass


def _network(rng: np.random.Generator, n_bus: int) -> list[tuple[int, int]]:
    # random spanning tree, then a ring closure and a few chords so that
    # most single outages keep the graph connected
    order = rng.permutation(n_bus) + 1
    edges = set()
    for i in range(1, n_bus):
        j = int(rng.integers(0, i))
        edges.add(tuple(sorted((int(order[i]), int(order[j])))))
    edges.add(tuple(sorted((int(order[0]), int(order[-1])))))
    for _ in range(max(1, n_bus // 3)):
        a, b = rng.choice(n_bus, 2, replace=False) + 1
        edges.add(tuple(sorted((int(a), int(b)))))
    return sorted(e for e in edges if e[0] != e[1])


def _sample(rng, n_bus, n_cand, n_cont, n_levels, rating_scale):
    base = 100.0
    edges = _network(rng, n_bus)
    buses = tuple(Bus(i, i == 1) for i in range(1, n_bus + 1))
    n_gen = max(2, n_bus // 2)
    gen_bus = rng.choice(n_bus, n_gen, replace=False) + 1
    loads = []
    for i in range(1, n_bus + 1):
        if i not in gen_bus or rng.random() < 0.3:
            loads.append(Load(i, i, float(np.round(rng.uniform(20, 120), 1))))
    total = sum(ld.p_d for ld in loads)
    caps = rng.dirichlet(np.ones(n_gen)) * total * 2.2 + 20
    costs = np.round(rng.uniform(10, 50, n_gen), 1)
    gens = tuple(Generator(g + 1, int(gen_bus[g]), 0.0, float(np.round(caps[g], 1)),
                           float(costs[g]), float(np.round(0.3 * caps[g], 1)),
                           float(np.round(0.3 * caps[g], 1)))
                 for g in range(n_gen))
    xs = np.round(rng.uniform(0.02, 0.2, len(edges)), 4)
    branches = [Branch(k + 1, a, b, float(xs[k]), 1.0) for k, (a, b) in enumerate(edges)]
    case = PowerCase(base, buses, tuple(branches), gens, tuple(loads), name="random")

    # merit-order dispatch without limits sets the scale of the flows
    inj = np.zeros(n_bus)
    left = total
    for g in sorted(gens, key=lambda g: (g.cost, g.id)):
        p = min(g.p_max, left)
        inj[g.bus - 1] += p
        left -= p
    for ld in loads:
        inj[ld.bus - 1] -= ld.p_d
    flows = np.abs(dc_power_flow(case, inj).flows)
    peak = max(ld.p_d for ld in loads) * 1.3
    ratings = np.maximum(flows * rng.uniform(0.7, 1.5, len(edges)), peak)
    branches = [Branch(b.id, b.from_bus, b.to_bus, b.x,
                       float(np.round(ratings[i] * rating_scale, 1)))
                for i, b in enumerate(branches)]
    case = PowerCase(base, buses, tuple(branches), gens, tuple(loads), name="random")

    radial = islanding_branches(case)
    safe = [b.id for b in case.branches if b.id not in radial]
    if len(safe) < n_cont or len(case.branches) < n_cand:
        raise GenerationError("too few branches")
    cont = sorted(int(k) for k in rng.choice(safe, n_cont, replace=False))
    cand = sorted(int(k) for k in rng.choice([b.id for b in case.branches], n_cand, replace=False))
    scales = [1.1, 0.9, 1.0, 1.2, 0.8][:n_levels]
    cont_hours = rng.integers(5, 60, size=(n_levels, n_cont)).astype(float)
    base_total = 8760.0 - cont_hours.sum()
    split = np.floor(base_total / n_levels)
    base_hours = [split] * (n_levels - 1) + [base_total - split * (n_levels - 1)]
    levels = tuple(LoadLevel(f"level{t}", scales[t], float(base_hours[t]),
                             tuple(float(h) for h in cont_hours[t])) for t in range(n_levels))
    scenario = PlanningScenario(levels, tuple(cont), tuple(cand))
    validate_scenario(scenario, case)
    return case, scenario


def _dispatch_feasible(case: PowerCase, scenario: PlanningScenario) -> bool:
    from .builder import build_planning_model
    from .solver import solve_lp

    model = build_planning_model(case, scenario, ())
    return solve_lp(model).status == "optimal"


def generate_test_instance(seed: int, buses: int = 6, candidates: int = 3,
                           contingencies: int = 2, levels: int = 2, *,
                           rating_scale: float = 1.0,
                           max_tries: int = 50) -> tuple[PowerCase, PlanningScenario]:
    """Connected random case plus scenario with a feasible no-device dispatch.

    Rejection-samples until the multi-state dispatch LP without devices is
    feasible. ``rating_scale`` stretches every thermal rating (large values
    give an uncongested system).
    """
    if buses < 3:
        raise ValueError("need at least 3 buses")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        try:
            case, scenario = _sample(rng, buses, candidates, contingencies, levels, rating_scale)
        except GenerationError:
            continue
        if _dispatch_feasible(case, scenario):
            return case, scenario
    raise GenerationError(f"no feasible instance after {max_tries} draws (seed {seed})")


def write_test_instance(directory, seed: int, **sizes) -> tuple[str, str]:
    """Write ``case.m`` and ``scenario.toml`` into ``directory``."""
    from pathlib import Path

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    case, scenario = generate_test_instance(seed, **sizes)
    case_path, sc_path = out / "case.m", out / "scenario.toml"
    case_path.write_text(format_matpower_case(case), encoding="utf-8")
    sc_path.write_text(format_scenario(scenario), encoding="utf-8")
    return str(case_path), str(sc_path)
