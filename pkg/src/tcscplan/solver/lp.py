"""LP front end: scaling, bound overrides, warm starts and dual recovery."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..model import MilpModel
from .simplex import Basis, DualSimplex, NumericalError

FEASIBILITY_TOL = 1e-7
INTEGRALITY_TOL = 1e-6


@dataclass
class LpSolution:
    """Result of one LP solve.

    ``duals[i]`` is ``-d(objective)/d(rhs_i)``, so a binding ``<=`` row in a
    minimisation has a nonnegative dual. ``reduced_costs[j]`` is
    ``d(objective)/d(x_j)`` along the nonbasic direction.
    """
    status: str
    x: np.ndarray
    duals: np.ndarray
    reduced_costs: np.ndarray
    objective: float
    iterations: int = 0
    basis: Basis | None = None
    max_primal_infeas: float = 0.0
    max_dual_infeas: float = 0.0


def _pow2(v: np.ndarray) -> np.ndarray:
    return np.exp2(np.round(np.log2(v)))


def scale_factors(A: sp.csr_matrix, passes: int = 6) -> tuple[np.ndarray, np.ndarray]:
    """Geometric-mean row/column scaling rounded to powers of two."""
    m, n = A.shape
    r, c = np.ones(m), np.ones(n)
    absA = abs(A).tocsr()
    if absA.nnz == 0:
        return r, c
    for _ in range(passes):
        S = sp.diags(r) @ absA @ sp.diags(c)
        S = S.tocsr()
        rmax = S.max(axis=1).toarray().ravel()
        rmin = _rowmin(S)
        ok = rmax > 0
        r[ok] /= np.sqrt(rmax[ok] * rmin[ok])
        S = (sp.diags(r) @ absA @ sp.diags(c)).tocsc()
        cmax = S.max(axis=0).toarray().ravel()
        cmin = _rowmin(S.T.tocsr())
        ok = cmax > 0
        c[ok] /= np.sqrt(cmax[ok] * cmin[ok])
    S = (sp.diags(r) @ absA @ sp.diags(c)).tocsc()
    cmax = S.max(axis=0).toarray().ravel()
    c[cmax > 0] /= cmax[cmax > 0]
    return _pow2(r), _pow2(c)


def _rowmin(S: sp.csr_matrix) -> np.ndarray:
    S.sum_duplicates()
    out = np.ones(S.shape[0])
    nonempty = np.diff(S.indptr) > 0
    if nonempty.any():
        out[nonempty] = np.minimum.reduceat(S.data, S.indptr[:-1][nonempty])
    return out


class LpEngine:
    """Holds the scaled constraint matrix so repeated solves skip setup."""

    def __init__(self, model: MilpModel, *, scale: bool = True, kernels=None, **tols):
        self.model = model
        A = model.A.tocsr()
        if scale:
            self.rs, self.cs = scale_factors(A)
        else:
            self.rs, self.cs = np.ones(A.shape[0]), np.ones(A.shape[1])
        self.As = (sp.diags(self.rs) @ A @ sp.diags(self.cs)).tocsc()
        cmax = float(np.abs(model.c * self.cs).max(initial=0.0))
        self.obj_scale = cmax if cmax > 0 else 1.0
        self.kernels = kernels
        self.tols = tols
        lo, hi = model.row_bounds()
        self.row_lo, self.row_hi = lo * self.rs, hi * self.rs

    def solve(self, lb=None, ub=None, warm_start: Basis | None = None,
              max_iter: int | None = None) -> LpSolution:
        model = self.model
        lb = model.lb if lb is None else lb
        ub = model.ub if ub is None else ub
        if np.any(lb > ub + 1e-12):
            n = model.n_cols
            return LpSolution("infeasible", np.full(n, np.nan), np.zeros(model.n_rows),
                              np.zeros(n), np.inf)
        cs = self.cs
        spx = DualSimplex(self.As, self.row_lo, self.row_hi, model.c * cs / self.obj_scale,
                          lb / cs, ub / cs, kernels=self.kernels, **self.tols)
        if warm_start is not None and warm_start.head.size == spx.m:
            spx.warm_start(warm_start)
        else:
            spx.slack_start()
        res = spx.solve(max_iter)
        n = model.n_cols
        x = res.x[:n] * cs
        # snap to bounds against rounding from unscaling
        x = np.minimum(np.maximum(x, lb), ub)
        y = res.y * self.rs * self.obj_scale
        dual = -y
        rc = res.d[:n] * self.obj_scale / cs
        if res.status != "optimal":
            return LpSolution(res.status, x, dual, rc,
                              np.inf if res.status == "infeasible" else -np.inf,
                              res.iterations, res.basis)
        return LpSolution("optimal", x, dual, rc, model.objective(x), res.iterations, res.basis,
                          res.max_primal_infeas, res.max_dual_infeas * self.obj_scale)


def solve_lp(model: MilpModel, warm_start: Basis | None = None, *, lb=None, ub=None,
             scale: bool = True, kernels=None, max_iter: int | None = None, **tols) -> LpSolution:
    """Solve the LP relaxation of ``model`` (integrality ignored).

    ``lb``/``ub`` override column bounds, e.g. to fix binaries.
    """
    return LpEngine(model, scale=scale, kernels=kernels, **tols).solve(
        lb, ub, warm_start, max_iter)


__all__ = ["LpSolution", "LpEngine", "solve_lp", "NumericalError", "FEASIBILITY_TOL",
           "INTEGRALITY_TOL"]
