"""DC network quantities, TCSC susceptance algebra and candidate screening."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .case import Branch, PowerCase, PlanningScenario

log = logging.getLogger(__name__)


class NetworkError(ValueError):
    pass


def branch_susceptance(x: float) -> float:
    if x <= 0:
        raise NetworkError(f"nonpositive reactance {x}")
    return 1.0 / x


def tcsc_susceptance_bounds(x: float, lower: float = -0.7, upper: float = 0.2) -> tuple[float, float]:
    """Range of the extra susceptance a TCSC adds to a line of reactance ``x``.

    ``lower`` and ``upper`` are the compensation limits as fractions of the
    line reactance. With the defaults this is ``(-1/(6x), 7/(3x))``.
    """
    if x <= 0:
        raise NetworkError(f"nonpositive reactance {x}")
    if lower == -0.7 and upper == 0.2:
        return -1.0 / (6.0 * x), 7.0 / (3.0 * x)
    return (tcsc_equivalent_susceptance(x, upper * x),
            tcsc_equivalent_susceptance(x, lower * x))


def tcsc_equivalent_susceptance(x: float, x_v: float) -> float:
    if x <= 0:
        raise NetworkError(f"nonpositive reactance {x}")
    if x + x_v == 0:
        raise NetworkError("compensation cancels the line reactance")
    return -x_v / (x * (x + x_v))


def recover_tcsc_reactance(x: float, b_v: float) -> float:
    """Device reactance that produces the extra susceptance ``b_v``."""
    den = 1.0 + b_v * x
    if den == 0:
        raise NetworkError("singular susceptance: 1 + b_v*x = 0")
    return -b_v * x * x / den


def big_m_tcsc(x: float, theta_max: float, lower: float = -0.7, upper: float = 0.2) -> float:
    b_min, b_max = tcsc_susceptance_bounds(x, lower, upper)
    return max(abs(b_min), abs(b_max)) * theta_max


def big_m_envelope(x: float, theta_max: float, lower: float = -0.7, upper: float = 0.2) -> float:
    """Smallest constant that fully relaxes a deselected envelope pair.

    The pair not chosen by ``y`` must admit ``w = b_V * theta`` for every
    ``b_V`` in range, which needs ``(b_max - b_min) * theta_max``.
    :func:`big_m_tcsc` (``b_max * theta_max``) bounds ``|w|`` but is short
    of this by ``|b_min| * theta_max``.
    """
    b_min, b_max = tcsc_susceptance_bounds(x, lower, upper)
    return (b_max - b_min) * theta_max


def big_m_outage(branch: Branch, is_candidate: bool, theta_max: float,
                 lower: float = -0.7, upper: float = 0.2) -> float:
    """Disjunctive constant that relaxes the flow rows of an outaged branch."""
    m = branch_susceptance(branch.x) * 2.0 * theta_max
    if is_candidate:
        m += big_m_tcsc(branch.x, theta_max, lower, upper)
    return m


@dataclass(frozen=True)
class TcscCandidate:
    branch_id: int
    b: float
    b_min: float
    b_max: float
    big_m: float
    big_m_outage: float
    rating: float
    big_m_envelope: float = 0.0


def make_candidate(branch: Branch, scenario: PlanningScenario, rating: float) -> TcscCandidate:
    lo, hi = scenario.compensation_lower, scenario.compensation_upper
    b_min, b_max = tcsc_susceptance_bounds(branch.x, lo, hi)
    m = big_m_tcsc(branch.x, scenario.theta_max, lo, hi)
    env = m if scenario.envelope_big_m == "bmax" else big_m_envelope(
        branch.x, scenario.theta_max, lo, hi)
    return TcscCandidate(branch.id, branch_susceptance(branch.x), b_min, b_max, m,
                         big_m_outage(branch, True, scenario.theta_max, lo, hi), rating, env)


# ---------------------------------------------------------------- DC flow

@dataclass(frozen=True)
class DcSolution:
    angles: np.ndarray       # rad, bus order of the case
    flows: np.ndarray        # MW, order of case.branches (0 when out)
    injections: np.ndarray   # MW


def incidence(case: PowerCase, branches: Sequence[Branch] | None = None) -> sp.csr_matrix:
    """Branch-bus incidence matrix (+1 at from bus, -1 at to bus)."""
    branches = case.active_branches if branches is None else branches
    pos = case.bus_index()
    rows = np.repeat(np.arange(len(branches)), 2)
    cols = np.array([[pos[br.from_bus], pos[br.to_bus]] for br in branches], dtype=int).ravel()
    vals = np.tile([1.0, -1.0], len(branches))
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(branches), len(case.buses)))


def dc_power_flow(case: PowerCase, injections: Sequence[float], *,
                  susceptances: dict[int, float] | None = None,
                  outaged: Sequence[int] = (), tol: float = 1e-6) -> DcSolution:
    """Lossless DC power flow with the reference angle fixed at zero.

    ``injections`` are per-bus MW in case bus order. ``susceptances``
    overrides branch susceptance (p.u.) by branch id, e.g. to include a
    TCSC setting.
    """
    p = np.asarray(injections, dtype=float)
    if p.shape != (len(case.buses),):
        raise NetworkError("one injection per bus is required")
    if abs(p.sum()) > tol * max(1.0, np.abs(p).sum()):
        raise NetworkError(f"injections do not balance (sum {p.sum():g} MW)")
    out = set(outaged)
    live = [br for br in case.active_branches if br.id not in out]
    b = np.array([(susceptances or {}).get(br.id, branch_susceptance(br.x)) for br in live])
    a = incidence(case, live)
    bbus = (a.T @ sp.diags(b) @ a).tocsc()
    ref = case.bus_index()[case.reference_bus]
    keep = np.array([i for i in range(len(case.buses)) if i != ref], dtype=int)
    theta = np.zeros(len(case.buses))
    if keep.size:
        if not is_connected(case, outaged):
            raise NetworkError("network is disconnected")
        red = bbus[keep][:, keep].tocsc()
        try:
            theta[keep] = splu(red).solve(p[keep] / case.base_mva)
        except RuntimeError as exc:
            raise NetworkError("singular reduced susceptance matrix") from exc
    live_flows = case.base_mva * b * (a @ theta)
    flows = np.zeros(len(case.branches))
    index = {br.id: i for i, br in enumerate(case.branches)}
    for br, f in zip(live, live_flows):
        flows[index[br.id]] = f
    inj = case.base_mva * (bbus @ theta)
    return DcSolution(theta, flows, inj)


def is_connected(case: PowerCase, outaged: Sequence[int] = ()) -> bool:
    out = set(outaged)
    live = [br for br in case.active_branches if br.id not in out]
    if not live:
        return len(case.buses) <= 1
    a = incidence(case, live)
    adj = (a.T @ a).tocsr()
    n, _ = connected_components(adj, directed=False)
    return n == 1


def islanding_branches(case: PowerCase) -> set[int]:
    """Branches whose single outage disconnects the network."""
    return {br.id for br in case.active_branches if not is_connected(case, (br.id,))}


# ---------------------------------------------------------------- screening

def flow_sensitivities(case: PowerCase, angles: np.ndarray, outaged: int | None = None) -> np.ndarray:
    """d(flow_k)/d(b_j) in p.u. for live branches k (rows) and j (cols).

    Derived from the DC model: raising the susceptance of branch ``j`` by
    one p.u. at fixed injections changes flows by
    ``theta_j * (e_j - PTDF[:, j])`` where ``PTDF[:, j]`` is the flow
    response to a unit transfer between the ends of ``j``.
    """
    live = [br for br in case.active_branches if br.id != outaged]
    b = np.array([branch_susceptance(br.x) for br in live])
    a = incidence(case, live).tocsc()
    bbus = (a.T @ sp.diags(b) @ a).tocsc()
    ref = case.bus_index()[case.reference_bus]
    keep = np.array([i for i in range(len(case.buses)) if i != ref], dtype=int)
    lu = splu(bbus[keep][:, keep].tocsc())
    rhs = a.T.toarray()[keep]                   # bus x branch transfer vectors
    theta_resp = np.zeros((len(case.buses), len(live)))
    theta_resp[keep] = lu.solve(rhs)
    ptdf = (sp.diags(b) @ a @ theta_resp)
    dtheta = a @ angles
    return (np.eye(len(live)) - ptdf) * dtheta[None, :]


def screen_candidates(case: PowerCase, scenario: PlanningScenario, count: int, *,
                      solver_options: dict | None = None) -> list[int]:
    """Top ``count`` branches by :func:`candidate_scores`."""
    if count <= 0:
        return []
    score = candidate_scores(case, scenario, solver_options=solver_options)
    return rank_candidates(case, score)[:count]


def rank_candidates(case: PowerCase, score: dict[int, float]) -> list[int]:
    radial = islanding_branches(case)
    return sorted((k for k in score if k not in radial),
                  key=lambda k: (-score[k], -branch_susceptance(case.branch(k).x) * case.branch(k).rating, k))


def candidate_scores(case: PowerCase, scenario: PlanningScenario, *,
                     solver_options: dict | None = None) -> dict[int, float]:
    """Congestion-sensitivity score of every in-service branch.

    Solves the multi-state dispatch without devices. In every state each
    binding thermal limit carries a price (the reduced cost of the flow
    variable, already weighted by state duration). A branch ``j`` scores
    ``sum |price_k| * |dP_k/db_j| * (b_max_j - b_min_j)`` over binding
    branches ``k`` and states, i.e. the first-order cost relief available
    from its full compensation range. :func:`rank_candidates` breaks ties,
    including the all-zero scores of an uncongested system, by ``b_k * S_k``
    then branch id, and drops branches whose outage islands the network.
    """
    from .builder import build_planning_model
    from .solver import solve_lp

    sc = scenario.with_candidates(())
    model = build_planning_model(case, sc, ())
    sol = solve_lp(model, **(solver_options or {}))
    if sol.status != "optimal":
        raise NetworkError(f"screening aborted: base dispatch LP is {sol.status}")

    reg = model.registry
    live_ids = [br.id for br in case.active_branches]
    score = dict.fromkeys(live_ids, 0.0)
    tol = 1e-9 * max(1.0, float(np.abs(model.c).max(initial=0.0)))
    for st in reg.states:
        theta = np.array([sol.x[reg.col("theta", b.id, st.state, st.level)] for b in case.buses])
        ids = [k for k in live_ids if k != st.outaged]
        price = np.array([sol.reduced_costs[reg.col("P", k, st.state, st.level)] for k in ids])
        binding = np.abs(price) > tol
        if not binding.any():
            continue
        sens = flow_sensitivities(case, theta, st.outaged)
        for jj, j in enumerate(ids):
            br = case.branch(j)
            lo, hi = tcsc_susceptance_bounds(br.x, scenario.compensation_lower,
                                             scenario.compensation_upper)
            score[j] += float(np.abs(price[binding]) @ np.abs(sens[binding, jj])) * (hi - lo)

    return score
