"""Branch and bound over binary columns, plus an enumeration oracle."""
from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..model import MilpModel
from .lp import INTEGRALITY_TOL, LpEngine, LpSolution

log = logging.getLogger(__name__)

LOG_HEADER = "node, depth, obj, bound, gap, frac_count"
OPTIMAL = "optimal-within-gap"


@dataclass
class MilpResult:
    status: str     # optimal-within-gap | optimal | infeasible | node-limit | time-limit
    x: np.ndarray | None
    objective: float
    bound: float
    nodes: int
    wall_time: float
    log: list[str] = field(default_factory=list)
    lp_iterations: int = 0
    evaluations: dict = field(default_factory=dict)

    @property
    def abs_gap(self) -> float:
        if self.x is None:
            return math.inf
        return self.objective - self.bound

    @property
    def gap(self) -> float:
        if self.x is None:
            return math.inf
        return (self.objective - self.bound) / max(1.0, abs(self.objective))


def relative_gap(incumbent: float, bound: float) -> float:
    if not math.isfinite(incumbent):
        return math.inf
    return max(incumbent - bound, 0.0) / max(1.0, abs(incumbent))


def presolved_bounds(model: MilpModel, lb=None, ub=None) -> tuple[np.ndarray, np.ndarray]:
    """Copy bounds and zero every column implied by a binary fixed at 0."""
    lb = (model.lb if lb is None else lb).copy()
    ub = (model.ub if ub is None else ub).copy()
    for col, implied in model.implications.items():
        if ub[col] <= 0.0:
            ub[implied] = np.minimum(ub[implied], 0.0)
            lb[implied] = np.maximum(lb[implied], 0.0)
    return lb, ub


def fractional(model: MilpModel, x: np.ndarray, tol: float = INTEGRALITY_TOL) -> np.ndarray:
    ints = np.flatnonzero(model.integer)
    f = np.abs(x[ints] - np.round(x[ints]))
    return ints[f > tol]


@dataclass(order=True)
class _Node:
    bound: float
    id: int
    depth: int = field(compare=False)
    fixes: tuple = field(compare=False)          # ((col, value), ...)
    basis: object = field(compare=False, default=None)


def branch_and_bound(model: MilpModel, gap_tol: float = 1e-4, node_limit: int = 100_000,
                     time_limit: float = math.inf, *, int_tol: float = INTEGRALITY_TOL,
                     engine: LpEngine | None = None, heuristic: bool = True,
                     primary_first: bool = True, branching: str = "hybrid",
                     incumbent: np.ndarray | None = None,
                     log_fn: Callable[[str], None] | None = None) -> MilpResult:
    """Best-bound branch and bound with depth-first plunges.

    ``branching``: ``"most-fractional"`` (lowest index on ties),
    ``"lowest-index"``, or ``"hybrid"`` which is most-fractional over the
    primary binaries and lowest-index over the rest. Keeps a single LP
    engine and warm-starts each node from its parent's basis. A first
    incumbent comes from fixing the primary binaries at 0 when the model
    declares them (for the planning model: install nothing).
    """
    if branching not in ("most-fractional", "lowest-index", "hybrid"):
        raise ValueError(f"unknown branching rule {branching!r}")
    t0 = time.perf_counter()
    engine = engine or LpEngine(model)
    root_lb, root_ub = presolved_bounds(model)
    signal = {int(y): int(z) for y, z in model.sign_links}
    primary = set(int(j) for j in model.primary)
    rounded_for: set[tuple] = set()
    lines = [LOG_HEADER]
    inc_x, inc_obj = None, math.inf
    iters = 0
    ids = itertools.count()

    def emit(line):
        lines.append(line)
        if log_fn:
            log_fn(line)

    def bounds_for(fixes):
        lb, ub = root_lb.copy(), root_ub.copy()
        for col, val in fixes:
            lb[col] = ub[col] = val
        return presolved_bounds(model, lb, ub)

    def polish(sol: LpSolution, basis) -> LpSolution | None:
        nonlocal iters
        lb, ub = root_lb.copy(), root_ub.copy()
        ints = np.flatnonzero(model.integer)
        vals = np.round(sol.x[ints])
        lb[ints] = ub[ints] = vals
        lb, ub = presolved_bounds(model, lb, ub)
        s = engine.solve(lb, ub, warm_start=basis)
        iters += s.iterations
        return s if s.status == "optimal" else None

    if heuristic and model.primary.size:
        lb, ub = root_lb.copy(), root_ub.copy()
        ub[model.primary] = 0.0
        lb[model.primary] = np.minimum(lb[model.primary], 0.0)
        lb, ub = presolved_bounds(model, lb, ub)
        s = engine.solve(lb, ub)
        iters += s.iterations
        if s.status == "optimal" and fractional(model, s.x, int_tol).size == 0:
            p = polish(s, s.basis)
            if p is not None:
                inc_x, inc_obj = p.x, p.objective

    if incumbent is not None:
        lb, ub = root_lb.copy(), root_ub.copy()
        ints = np.flatnonzero(model.integer)
        lb[ints] = ub[ints] = np.round(incumbent[ints])
        lb, ub = presolved_bounds(model, lb, ub)
        s = engine.solve(lb, ub)
        iters += s.iterations
        if s.status == "optimal" and s.objective < inc_obj:
            inc_x, inc_obj = s.x, s.objective

    heap: list[_Node] = []
    pruned_bound = math.inf
    plunge_next: _Node | None = _Node(-math.inf, next(ids), 0, ())
    plunging = True
    dive_improved = False
    nodes = 0
    status = OPTIMAL

    def best_bound(current=math.inf):
        b = min(current, pruned_bound, inc_obj)
        if heap:
            b = min(b, heap[0].bound)
        if plunge_next is not None:
            b = min(b, plunge_next.bound)
        return b

    def tol_for(obj):
        return gap_tol * max(1.0, abs(obj))

    while True:
        if plunge_next is not None:
            node, plunge_next = plunge_next, None
        elif heap:
            if relative_gap(inc_obj, heap[0].bound) <= gap_tol:
                pruned_bound = min(pruned_bound, heap[0].bound)
                break
            node = heapq.heappop(heap)
            plunging = plunging and dive_improved
            dive_improved = False
        else:
            break
        if nodes >= node_limit:
            heapq.heappush(heap, node)
            status = "node-limit"
            break
        if time.perf_counter() - t0 > time_limit:
            heapq.heappush(heap, node)
            status = "time-limit"
            break
        if node.bound >= inc_obj - tol_for(inc_obj):
            if node.bound < inc_obj:
                pruned_bound = min(pruned_bound, node.bound)
            continue
        nodes += 1
        lb, ub = bounds_for(node.fixes)
        sol = engine.solve(lb, ub, warm_start=node.basis)
        iters += sol.iterations
        if sol.status != "optimal":
            emit(f"{node.id}, {node.depth}, infeasible, {best_bound():.10g}, "
                 f"{relative_gap(inc_obj, best_bound()):.3g}, -")
            continue
        obj = max(sol.objective, node.bound)
        frac = fractional(model, sol.x, int_tol)
        emit(f"{node.id}, {node.depth}, {obj:.10g}, {best_bound(obj):.10g}, "
             f"{relative_gap(inc_obj, best_bound(obj)):.3g}, {frac.size}")
        if obj >= inc_obj - tol_for(inc_obj):
            if obj < inc_obj:
                pruned_bound = min(pruned_bound, obj)
            continue
        if frac.size == 0:
            p = polish(sol, sol.basis)
            if p is not None and p.objective < inc_obj:
                inc_x, inc_obj = p.x, p.objective
                dive_improved = True
                plunging = True
            continue
        forced = None
        if primary_first and model.primary.size:
            frac_p = np.intersect1d(frac, model.primary)
            open_p = model.primary[lb[model.primary] < ub[model.primary]]
            if frac_p.size:
                frac = frac_p
            elif open_p.size:
                # an integral but unfixed placement still leaves its
                # sign binaries free; settle the placement first
                forced = int(open_p.min())
            if frac_p.size == 0 and heuristic and len(model.sign_links):
                ycol, zcol = model.sign_links[:, 0], model.sign_links[:, 1]
                free = lb[ycol] < ub[ycol]
                key = tuple(np.round(sol.x[model.primary]).astype(int))
                if free.any() and key not in rounded_for:
                    rounded_for.add(key)
                    lb2, ub2 = lb.copy(), ub.copy()
                    lb2[ycol[free]] = ub2[ycol[free]] = (sol.x[zcol[free]] < 0).astype(float)
                    s2 = engine.solve(lb2, ub2, warm_start=sol.basis)
                    iters += s2.iterations
                    if (s2.status == "optimal" and s2.objective < inc_obj
                            and fractional(model, s2.x, int_tol).size == 0):
                        inc_x, inc_obj = s2.x, s2.objective
                        dive_improved = True
        f = sol.x[frac] - np.floor(sol.x[frac])
        score = np.minimum(f, 1.0 - f)
        if forced is not None:
            j = forced
        elif branching == "lowest-index" or (
                branching == "hybrid" and not primary.intersection(frac.tolist())):
            j = int(frac.min())
        else:
            j = int(frac[np.argmax(score)])    # argmax keeps the lowest index on ties
        if j in signal:
            up_first = sol.x[signal[j]] < 0
        else:
            up_first = sol.x[j] - math.floor(sol.x[j]) >= 0.5
        down = _Node(obj, next(ids), node.depth + 1, node.fixes + ((j, 0.0),), sol.basis)
        up = _Node(obj, next(ids), node.depth + 1, node.fixes + ((j, 1.0),), sol.basis)
        first, second = (up, down) if up_first else (down, up)
        if plunging:
            plunge_next = first
            heapq.heappush(heap, second)
        else:
            heapq.heappush(heap, first)
            heapq.heappush(heap, second)

    bound = best_bound()
    if inc_x is None:
        if status == OPTIMAL:
            status = "infeasible"
        bound = min(bound, heap[0].bound) if heap else bound
    elif status == OPTIMAL:
        bound = min(bound, inc_obj)
    return MilpResult(status, inc_x, inc_obj, bound, nodes, time.perf_counter() - t0, lines, iters)


def _gray(k: int):
    for i in range(1 << k):
        g = i ^ (i >> 1)
        yield tuple((g >> b) & 1 for b in range(k))


def brute_force(model: MilpModel, max_binaries: int = 20, *, enumerate_cols=None,
                int_tol: float = INTEGRALITY_TOL, exhaustive: bool = False,
                engine: LpEngine | None = None) -> MilpResult:
    """Exact optimum by enumerating the primary binaries.

    Every placement vector is fixed in turn (Gray-code order so consecutive
    LPs differ in one bound). Remaining binaries are relaxed; when the
    relaxation leaves some fractional, a depth-first search fixes the
    lowest-index fractional one to 0 and to 1 and recurses, pruning against
    the best value found (per placement when ``exhaustive``). Fixed
    placements and their optimal values are kept in ``evaluations``.
    """
    t0 = time.perf_counter()
    cols = np.asarray(model.primary if enumerate_cols is None else enumerate_cols, dtype=int)
    if cols.size == 0 and enumerate_cols is None and not model.primary.size:
        cols = np.zeros(0, dtype=int)
    root_lb, root_ub = presolved_bounds(model)
    free = cols[root_lb[cols] < root_ub[cols]]
    if free.size > max_binaries:
        raise ValueError(f"{free.size} free binaries exceed the enumeration limit {max_binaries}")
    engine = engine or LpEngine(model)
    signal = {int(y): int(z) for y, z in model.sign_links}
    best_obj, best_x = math.inf, None
    evaluations: dict[tuple, float] = {}
    n_lp = 0
    iters = 0
    basis = None

    def solve(lb, ub, warm):
        nonlocal n_lp, iters
        s = engine.solve(lb, ub, warm_start=warm)
        n_lp += 1
        iters += s.iterations
        return s

    def search(lb, ub, sol, incumbent):
        """Return the best (objective, x) at or below this LP node."""
        if sol.status != "optimal":
            return incumbent
        inc_obj = incumbent[0]
        if sol.objective >= inc_obj - 1e-9 * max(1.0, abs(inc_obj)):
            return incumbent
        frac = fractional(model, sol.x, int_tol)
        if frac.size == 0:
            return (sol.objective, sol.x)
        j = int(frac.min())
        order = (1.0, 0.0) if j in signal and sol.x[signal[j]] < 0 else (0.0, 1.0)
        for v in order:
            lb2, ub2 = lb.copy(), ub.copy()
            lb2[j] = ub2[j] = v
            lb2, ub2 = presolved_bounds(model, lb2, ub2)
            incumbent = search(lb2, ub2, solve(lb2, ub2, sol.basis), incumbent)
        return incumbent

    for bits in _gray(free.size):
        lb, ub = root_lb.copy(), root_ub.copy()
        lb[free] = ub[free] = bits
        lb, ub = presolved_bounds(model, lb, ub)
        sol = solve(lb, ub, basis)
        if sol.status != "optimal":
            continue
        basis = sol.basis
        start = (math.inf, None) if exhaustive else (best_obj, best_x)
        obj, x = search(lb, ub, sol, start)
        if exhaustive or obj < best_obj:
            evaluations[bits] = obj
        if obj < best_obj:
            best_obj, best_x = obj, x

    status = "optimal" if best_x is not None else "infeasible"
    if best_x is not None:
        # integral polish: exact binaries, continuous part re-solved
        lb, ub = root_lb.copy(), root_ub.copy()
        ints = np.flatnonzero(model.integer)
        lb[ints] = ub[ints] = np.round(best_x[ints])
        lb, ub = presolved_bounds(model, lb, ub)
        p = solve(lb, ub, None)
        if p.status == "optimal":
            best_x = p.x
            best_obj = min(best_obj, p.objective) if abs(p.objective - best_obj) <= 1e-7 * max(1, abs(best_obj)) else p.objective
    return MilpResult(status, best_x, best_obj, best_obj, n_lp, time.perf_counter() - t0,
                      lp_iterations=iters, evaluations=evaluations)
