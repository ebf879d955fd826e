"""Bounded-variable revised dual simplex.

Works on the computational form ``[A  -I] (x, r) = 0`` where the logical
``r`` carries the row bounds. Every variable is kept boxed: infinite
structural bounds get an artificial box, infinite row bounds are replaced
by the activity bounds implied by the structural box. With every variable
boxed, any basis can be made dual feasible by moving nonbasic variables to
the bound matching the sign of their reduced cost, so the same routine
handles cold starts (slack basis) and warm starts after bound changes.

Basis inverse: sparse LU (SuperLU) refreshed periodically with a
product-form eta file in between. Pricing uses dual steepest edge; the
ratio test flips boxed variables across breakpoints (long-step) and picks
the pivot with a Harris pass. After a run of degenerate steps the method
switches to Bland's rule until progress resumes.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import kernels as _default_kernels

log = logging.getLogger(__name__)

BASIC, AT_LOWER, AT_UPPER, FIXED = 0, 1, 2, 3
ARTIFICIAL_BOX = 1e7


class NumericalError(RuntimeError):
    """Simplex breakdown (singular basis or iteration limit)."""


@dataclass
class Basis:
    """Warm-start information for a later solve of the same-shaped LP."""
    head: np.ndarray      # basic variable per row
    state: np.ndarray     # status per variable
    weights: np.ndarray   # dual steepest-edge weights per row


@dataclass
class SimplexResult:
    status: str
    x: np.ndarray          # structural + logical values (scaled space)
    y: np.ndarray          # row multipliers (scaled space)
    d: np.ndarray          # reduced costs (scaled space)
    basis: Basis
    iterations: int
    max_primal_infeas: float
    max_dual_infeas: float


class DualSimplex:
    def __init__(self, A: sp.spmatrix, row_lo, row_hi, c, lb, ub, *,
                 primal_tol=1e-7, dual_tol=1e-7, pivot_tol=1e-7,
                 refactor_every=64, bland_after=60, perturbation=1e-6, kernels=None):
        self.kern = kernels or _default_kernels
        A = sp.csc_matrix(A, dtype=float)
        self.m, self.n = A.shape
        m, n = self.m, self.n
        self.A = A
        self.At = A.T.tocsr()
        self.ptol, self.dtol, self.pivtol = primal_tol, dual_tol, pivot_tol
        self.refactor_every = refactor_every
        self.bland_after = bland_after
        self.perturbation = perturbation

        lb = np.asarray(lb, dtype=float).copy()
        ub = np.asarray(ub, dtype=float).copy()
        self.art_lo = ~np.isfinite(lb)
        self.art_hi = ~np.isfinite(ub)
        lb[self.art_lo] = -ARTIFICIAL_BOX
        ub[self.art_hi] = ARTIFICIAL_BOX
        # activity bounds implied by the structural box
        pos, neg = A.maximum(0), A.minimum(0)
        act_lo = pos @ lb + neg @ ub
        act_hi = pos @ ub + neg @ lb
        row_lo = np.asarray(row_lo, dtype=float)
        row_hi = np.asarray(row_hi, dtype=float)
        rlo = np.where(np.isfinite(row_lo), row_lo, np.minimum(act_lo, row_hi))
        rhi = np.where(np.isfinite(row_hi), row_hi, np.maximum(act_hi, row_lo))
        self.lb = np.concatenate([lb, rlo])
        self.ub = np.concatenate([ub, rhi])
        self.c = np.concatenate([np.asarray(c, dtype=float), np.zeros(m)])
        self.N = n + m

        self.head = np.arange(n, n + m)
        self.state = np.empty(self.N, dtype=np.int8)
        self.x = np.zeros(self.N)
        self.d = self.c.copy()
        self.w = np.ones(m)
        self.iterations = 0
        self._lu = None
        cap = 1 << 12
        self._eta_start = np.zeros(refactor_every + 1, dtype=np.int64)
        self._eta_idx = np.zeros(cap, dtype=np.int32)
        self._eta_val = np.zeros(cap)
        self._eta_row = np.zeros(refactor_every, dtype=np.int64)
        self._eta_piv = np.zeros(refactor_every)
        self._n_eta = 0

    # ------------------------------------------------------------ basis setup

    def slack_start(self):
        n = self.n
        self.head = np.arange(n, self.N)
        st = np.where(self.c[:n] >= 0, AT_LOWER, AT_UPPER).astype(np.int8)
        st[self.lb[:n] == self.ub[:n]] = FIXED
        self.state = np.concatenate([st, np.zeros(self.m, dtype=np.int8)])
        self.w = np.ones(self.m)
        self._crash_free()
        self._place_nonbasic()

    def _crash_free(self):
        """Swap free columns into the slack basis against equality rows.

        A free column left nonbasic sits on its artificial box and costs
        roughly one pivot each (plus the damage of a 1e7 primal value), so
        it pays to start with as many of them basic as a triangular pick
        allows. Triangular: once a column takes a row, every other row it
        touches is closed, so the crashed part of B stays triangular.
        """
        n = self.n
        free = np.flatnonzero(self.art_lo & self.art_hi)
        if free.size == 0:
            return
        rows_eq = self.lb[n:] == self.ub[n:]
        open_row = rows_eq.copy()
        A = self.A
        counts = np.diff(A.indptr)[free]
        for j in free[np.argsort(counts, kind="stable")]:
            lo, hi = A.indptr[j], A.indptr[j + 1]
            idx, val = A.indices[lo:hi], np.abs(A.data[lo:hi])
            ok = open_row[idx] & (val > 1e-3 * val.max(initial=0.0))
            if not ok.any():
                continue
            r = idx[ok][np.argmax(val[ok])]
            self.head[r] = j
            self.state[j] = BASIC
            self.state[n + r] = FIXED
            open_row[idx] = False

    def warm_start(self, basis: Basis):
        self.head = basis.head.copy()
        self.state = basis.state.copy()
        self.w = basis.weights.copy()
        nb = self.state != BASIC
        fixed = nb & (self.lb == self.ub)
        self.state[fixed] = FIXED
        self.state[nb & ~fixed & (self.state == FIXED)] = AT_LOWER
        self._place_nonbasic()

    def _place_nonbasic(self):
        st = self.state
        self.x = np.where(st == AT_UPPER, self.ub, self.lb).astype(float)
        self.x[st == BASIC] = 0.0

    # ------------------------------------------------------------ linear algebra

    def _column(self, j) -> np.ndarray:
        v = np.zeros(self.m)
        if j < self.n:
            lo, hi = self.A.indptr[j], self.A.indptr[j + 1]
            v[self.A.indices[lo:hi]] = self.A.data[lo:hi]
        else:
            v[j - self.n] = -1.0
        return v

    def _full_times(self, xfull: np.ndarray) -> np.ndarray:
        return self.A @ xfull[:self.n] - xfull[self.n:]

    def _refactor(self):
        n, m = self.n, self.m
        head = self.head
        struct = head < n
        cols = head[struct]
        pos = np.flatnonzero(struct)
        sub = self.A[:, cols].tocoo()
        rows = np.concatenate([sub.row, head[~struct] - n])
        cidx = np.concatenate([pos[sub.col], np.flatnonzero(~struct)])
        vals = np.concatenate([sub.data, -np.ones((~struct).sum())])
        B = sp.csc_matrix((vals, (rows, cidx)), shape=(m, m))
        try:
            lu = splu(B, permc_spec="COLAMD")
            diag = np.abs(lu.U.diagonal())
            if diag.size and diag.min() <= 1e-11 * max(1.0, diag.max()):
                raise RuntimeError("near singular")
        except RuntimeError:
            log.warning("basis is singular after %d iterations; restarting from slack basis",
                        self.iterations)
            self._repair()
            return
        self._lu = lu
        self._n_eta = 0
        self._eta_start[0] = 0
        self._recompute()

    def _repair(self):
        self.slack_start()
        self._lu = None
        B = -sp.identity(self.m, format="csc")
        self._lu = splu(B)
        self._n_eta = 0
        self._eta_start[0] = 0
        self._recompute()
        self._repairs = getattr(self, "_repairs", 0) + 1
        if self._repairs > 3:
            raise NumericalError("repeated singular bases")

    def _recompute(self):
        head = self.head
        xn = self.x.copy()
        xn[head] = 0.0
        self.x[head] = self.ftran(-self._full_times(xn))
        cb = self.c[head]
        y = self.btran(cb.copy())
        self.y = y
        self.d = self.c - np.concatenate([self.At @ y, -y])
        self.d[head] = 0.0

    def ftran(self, v: np.ndarray) -> np.ndarray:
        x = self._lu.solve(v)
        if self._n_eta:
            self.kern.ftran_etas(x, self._n_eta, self._eta_start, self._eta_idx, self._eta_val,
                                 self._eta_row, self._eta_piv)
        return x

    def btran(self, v: np.ndarray) -> np.ndarray:
        v = np.ascontiguousarray(v, dtype=float)
        if self._n_eta:
            self.kern.btran_etas(v, self._n_eta, self._eta_start, self._eta_idx, self._eta_val,
                                 self._eta_row, self._eta_piv)
        return self._lu.solve(v, trans="T")

    def _push_eta(self, col: np.ndarray, r: int, piv: float):
        nz = np.flatnonzero(col)
        e = self._n_eta
        lo = self._eta_start[e]
        hi = lo + nz.size
        if hi > self._eta_idx.size:
            size = max(2 * self._eta_idx.size, hi)
            self._eta_idx = np.resize(self._eta_idx, size)
            self._eta_val = np.resize(self._eta_val, size)
        self._eta_idx[lo:hi] = nz
        self._eta_val[lo:hi] = col[nz]
        self._eta_start[e + 1] = hi
        self._eta_row[e] = r
        self._eta_piv[e] = piv
        self._n_eta = e + 1

    # ------------------------------------------------------------ main loop

    def _flip_dual_infeasible(self) -> bool:
        """Move nonbasic variables to the bound their reduced cost asks for."""
        st, d = self.state, self.d
        to_up = np.flatnonzero((st == AT_LOWER) & (d < -self.dtol))
        to_lo = np.flatnonzero((st == AT_UPPER) & (d > self.dtol))
        if to_up.size == 0 and to_lo.size == 0:
            return False
        delta = np.zeros(self.N)
        delta[to_up] = self.ub[to_up] - self.lb[to_up]
        delta[to_lo] = self.lb[to_lo] - self.ub[to_lo]
        st[to_up] = AT_UPPER
        st[to_lo] = AT_LOWER
        self.x[to_up] = self.ub[to_up]
        self.x[to_lo] = self.lb[to_lo]
        self.x[self.head] -= self.ftran(self._full_times(delta))
        return True

    def _perturb(self):
        # small cost shifts pushing each nonbasic reduced cost away from zero;
        # fixed seed keeps runs deterministic
        rng = np.random.default_rng(12345)
        c = self.c
        xi = self.perturbation * (1.0 + np.abs(c)) * (1.0 + rng.random(self.N))
        st = self.state
        shift = np.where(st == AT_LOWER, xi, np.where(st == AT_UPPER, -xi, 0.0))
        self.c = c + shift

    def solve(self, max_iter: int | None = None) -> SimplexResult:
        if max_iter is None:
            max_iter = 20 * (self.m + self.n) + 1000
        c_true = self.c
        self.c = c_true.copy()
        if self.perturbation > 0:
            self._perturb()
        # shifts (perturbation and cost shifting) are dropped at the end;
        # the last round runs without shifting so it ends on the true costs
        shift_rounds = 3
        self._refactor()
        self._flip_dual_infeasible()
        degenerate = 0
        verified = False
        n = self.n
        while True:
            if self.iterations >= max_iter:
                raise NumericalError(f"iteration limit {max_iter} reached")
            head = self.head
            xb = self.x[head]
            lbb, ubb = self.lb[head], self.ub[head]
            infeas = np.maximum(lbb - xb, xb - ubb)
            tol = self.ptol * (1.0 + np.maximum(np.abs(lbb), np.abs(ubb)).clip(max=1e3))
            bad = np.flatnonzero(infeas > tol)
            if bad.size == 0:
                if self._flip_dual_infeasible():
                    continue
                if self._n_eta and not verified:
                    self._refactor()
                    verified = True
                    continue
                if shift_rounds and np.any(self.c != c_true):
                    # drop the shifts; any reduced cost of the wrong sign is
                    # fixed by a bound flip and a few more dual pivots
                    shift_rounds -= 1
                    self.c = c_true.copy()
                    self._recompute()
                    degenerate = 0
                    continue
                return self._result("optimal")
            verified = False
            bland = degenerate > self.bland_after
            if bland:
                r = bad[np.argmin(head[bad])]
            else:
                r = bad[np.argmax(infeas[bad] ** 2 / self.w[bad])]
            jout = head[r]
            below = self.x[jout] < self.lb[jout]
            target = self.lb[jout] if below else self.ub[jout]
            sgn = -1.0 if below else 1.0
            delta = self.x[jout] - target

            er = np.zeros(self.m)
            er[r] = 1.0
            rho = self.btran(er)
            alpha = np.concatenate([self.At @ rho, -rho])
            alpha[head] = 0.0
            amax = np.abs(alpha).max(initial=0.0)
            alpha[np.abs(alpha) < 1e-12 * max(1.0, amax)] = 0.0
            q, flips = self.kern.dual_ratio_test(alpha, self.d, self.state, self.lb, self.ub, sgn,
                                                 abs(delta), self.pivtol * max(1.0, amax),
                                                 self.dtol, bland)
            if q < 0:
                if self._n_eta:
                    self._refactor()
                    continue
                self.c = c_true
                return self._result("infeasible")

            col = self._column(q)
            aq = self.ftran(col)
            piv = aq[r]
            if abs(piv - alpha[q]) > 1e-7 * (1.0 + abs(piv)) or abs(piv) < 1e-11:
                if self._n_eta:
                    self._refactor()
                    continue
                raise NumericalError("unstable pivot on a fresh factorization")

            if flips.size:
                dx = np.where(self.state[flips] == AT_LOWER,
                              self.ub[flips] - self.lb[flips], self.lb[flips] - self.ub[flips])
                self.state[flips] = np.where(self.state[flips] == AT_LOWER, AT_UPPER, AT_LOWER)
                self.x[flips] += dx
                full = np.zeros(self.N)
                full[flips] = dx
                self.x[head] -= self.ftran(self._full_times(full))
                delta = self.x[jout] - target

            # dual step
            dq = self.d[q]
            if (self.state[q] == AT_LOWER and dq < 0) or (self.state[q] == AT_UPPER and dq > 0):
                dq = 0.0
            theta_d = dq / piv
            self.d -= theta_d * alpha
            self.d[jout] = -theta_d
            self.d[q] = 0.0
            degenerate = degenerate + 1 if abs(theta_d) <= 1e-12 else 0
            if shift_rounds:
                # Harris steps leave reduced costs up to dual_tol on the
                # wrong side; shift their costs so the errors cannot add up
                st = self.state
                wrong = np.flatnonzero(((st == AT_LOWER) & (self.d < 0.0))
                                       | ((st == AT_UPPER) & (self.d > 0.0)))
                if wrong.size:
                    self.c[wrong] -= self.d[wrong]
                    self.d[wrong] = 0.0

            # primal step
            theta_p = delta / piv
            self.x[head] -= theta_p * aq
            self.x[q] += theta_p

            # dual steepest-edge weights
            tau = self.ftran(rho.copy())
            wr = float(rho @ rho)
            ratio = aq / piv
            w = self.w - 2.0 * ratio * tau + ratio * ratio * wr
            self.w = np.maximum(w, ratio * ratio)
            self.w[r] = max(wr / (piv * piv), 1e-12)

            head[r] = q
            self.state[q] = BASIC
            self.state[jout] = FIXED if self.lb[jout] == self.ub[jout] else (AT_LOWER if below else AT_UPPER)
            self.x[jout] = target
            self._push_eta(aq, r, piv)
            self.iterations += 1
            if self._n_eta >= self.refactor_every:
                self._refactor()

    def _result(self, status: str) -> SimplexResult:
        head = self.head
        xb = self.x[head]
        pinf = float(np.maximum(np.maximum(self.lb[head] - xb, xb - self.ub[head]), 0).max(initial=0))
        st, d = self.state, self.d
        dinf = float(np.maximum(np.where(st == AT_LOWER, -d, 0), np.where(st == AT_UPPER, d, 0)).max(initial=0))
        if status == "optimal":
            n = self.n
            at_art = ((st[:n] == AT_LOWER) & self.art_lo) | ((st[:n] == AT_UPPER) & self.art_hi)
            if np.any(at_art & (np.abs(d[:n]) > self.dtol)):
                status = "unbounded"
        basis = Basis(self.head.copy(), self.state.copy(), self.w.copy())
        return SimplexResult(status, self.x.copy(), self.y.copy(), self.d.copy(), basis,
                             self.iterations, pinf, dinf)
