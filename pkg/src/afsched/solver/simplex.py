"""Bounded-variable revised primal simplex.

Problems are taken in the form  max c.x  s.t.  row_lo <= A x <= row_hi,
lb <= x <= ub  with finite variable bounds. Each row gets a logical
variable s = A x, so the working system is [A  -I] (x, s) = 0 and every
variable is boxed (logicals may be open on one side). Phase 1 adds an
artificial only for rows the all-at-lower-bound start violates.

The basis inverse is kept explicitly and updated by elementary row
operations, with a fresh inverse every ``REFACTOR_EVERY`` pivots.
Pricing is Dantzig's rule; after a run of degenerate pivots it falls back
to Bland's rule until the objective moves again.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

FEAS_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
PHASE1_TOL = 1e-8
REFACTOR_EVERY = 64
STALL_LIMIT = 40

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


@dataclass
class LpSolution:
    status: str
    values: np.ndarray | None
    objective: float
    iterations: int
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None

    @property
    def optimal(self):
        return self.status == OPTIMAL


class _Core:
    """Simplex state on a presolved, scaled problem."""

    def __init__(self, c, A, lo, hi, lb, ub):
        m, n = A.shape
        self.m, self.n = m, n
        self.A = A
        self.c = c
        big = n + 2 * m
        self.lo = np.concatenate([lb, lo, np.zeros(m)])
        self.hi = np.concatenate([ub, hi, np.zeros(m)])
        self.sigma = np.ones(m)
        self.z = np.zeros(big)
        self.at_upper = np.zeros(big, dtype=bool)
        self.head = np.empty(m, dtype=int)
        self.iterations = 0

        self.z[:n] = lb
        act = A @ lb
        need = []
        for i in range(m):
            if lo[i] - FEAS_TOL <= act[i] <= hi[i] + FEAS_TOL:
                self.head[i] = n + i
                self.z[n + i] = act[i]
            else:
                bound = lo[i] if act[i] < lo[i] else hi[i]
                self.z[n + i] = bound
                self.at_upper[n + i] = bound == hi[i]
                self.sigma[i] = 1.0 if bound > act[i] else -1.0
                self.head[i] = n + m + i
                self.z[n + m + i] = abs(bound - act[i])
                self.hi[n + m + i] = np.inf
                need.append(i)
        self.artificial_rows = need
        self.is_basic = np.zeros(big, dtype=bool)
        self.is_basic[self.head] = True
        self._refactor()

    def column(self, j):
        n, m = self.n, self.m
        if j < n:
            return self.A[:, j]
        e = np.zeros(m)
        if j < n + m:
            e[j - n] = -1.0
        else:
            e[j - n - m] = self.sigma[j - n - m]
        return e

    def _basis_matrix(self):
        if self.m == 0:
            return np.zeros((0, 0))
        return np.column_stack([self.column(j) for j in self.head])

    def _refactor(self):
        self.Binv = self._block_inverse()
        n, m = self.n, self.m
        zn = np.where(self.is_basic, 0.0, self.z)
        rhs = self.A @ zn[:n] - zn[n:n + m] + self.sigma * zn[n + m:]
        self.z[self.head] = -self.Binv @ rhs
        self.since_refactor = 0

    def _block_inverse(self):
        # Unit columns (logicals, artificials) pin their rows; only the
        # structural columns restricted to the remaining rows need inverting.
        n, m = self.n, self.m
        head = self.head
        spos = np.flatnonzero(head < n)
        upos = np.flatnonzero(head >= n)
        is_logical = head[upos] < n + m
        urows = np.where(is_logical, head[upos] - n, head[upos] - n - m)
        uval = np.where(is_logical, -1.0, self.sigma[urows])
        covered = np.zeros(m, dtype=bool)
        covered[urows] = True
        rest = np.flatnonzero(~covered)
        scols = head[spos]
        Minv = np.linalg.inv(self.A[np.ix_(rest, scols)]) if len(spos) else np.zeros((0, 0))
        Binv = np.zeros((m, m))
        Binv[np.ix_(spos, rest)] = Minv
        G = self.A[np.ix_(urows, scols)] @ Minv
        Binv[np.ix_(upos, rest)] = -G / uval[:, None]
        Binv[upos, urows] += 1.0 / uval
        return Binv

    def duals(self, cost):
        return cost[self.head] @ self.Binv

    def run(self, cost, max_iter):
        """Optimize ``cost`` from the current basis. Returns a status."""
        n, m = self.n, self.m
        nm = n + m
        stall = 0
        bland = False
        while True:
            if self.iterations >= max_iter:
                return ITERATION_LIMIT
            if self.since_refactor >= REFACTOR_EVERY:
                self._refactor()
            y = self.duals(cost)
            d = np.empty(nm)
            d[:n] = cost[:n] - self.A.T @ y
            d[n:] = y  # logical columns are -e_i with zero cost
            free = ~self.is_basic[:nm] & (self.hi[:nm] - self.lo[:nm] > FEAS_TOL)
            up = free & ~self.at_upper[:nm] & (d > DUAL_TOL)
            down = free & self.at_upper[:nm] & (d < -DUAL_TOL)
            eligible = up | down
            if not eligible.any():
                return OPTIMAL
            if bland:
                j = int(np.flatnonzero(eligible)[0])
            else:
                j = int(np.argmax(np.where(eligible, np.abs(d), -1.0)))
            dirn = 1.0 if up[j] else -1.0
            if j < n:
                col = self.A[:, j]
                nz = np.flatnonzero(col)
                alpha = self.Binv[:, nz] @ col[nz]
            else:
                alpha = self.Binv @ self.column(j)
            rate = -dirn * alpha
            zb = self.z[self.head]
            lob, hib = self.lo[self.head], self.hi[self.head]
            with np.errstate(divide="ignore", invalid="ignore"):
                dec = rate < -PIVOT_TOL
                inc = rate > PIVOT_TOL
                exact = np.full(m, np.inf)
                exact[dec] = (zb[dec] - lob[dec]) / -rate[dec]
                exact[inc] = (hib[inc] - zb[inc]) / rate[inc]
                exact = np.maximum(exact, 0.0)
                loose = np.full(m, np.inf)
                loose[dec] = (zb[dec] - lob[dec] + FEAS_TOL) / -rate[dec]
                loose[inc] = (hib[inc] - zb[inc] + FEAS_TOL) / rate[inc]
            flip = self.hi[j] - self.lo[j]
            theta_cap = loose.min() if m else np.inf
            if not np.isfinite(theta_cap) and not np.isfinite(flip):
                return UNBOUNDED
            self.iterations += 1
            if flip <= exact.min(initial=np.inf):
                theta = flip
                self.z[j] = self.hi[j] if dirn > 0 else self.lo[j]
                self.at_upper[j] = dirn > 0
                self.z[self.head] = zb + theta * rate
                leave = None
            else:
                cand = np.flatnonzero(exact <= theta_cap)
                if bland:
                    tmin = exact[cand].min()
                    ties = cand[exact[cand] <= tmin + 1e-12]
                    r = int(ties[np.argmin(self.head[ties])])
                else:
                    r = int(cand[np.argmax(np.abs(rate[cand]))])
                theta = exact[r]
                leave = int(self.head[r])
                self.z[self.head] = zb + theta * rate
                self.z[j] += dirn * theta
                hit_upper = rate[r] > 0
                self.z[leave] = self.hi[leave] if hit_upper else self.lo[leave]
                self.at_upper[leave] = hit_upper
                if leave >= nm:  # artificial leaves for good
                    self.hi[leave] = 0.0
                    self.z[leave] = 0.0
                    self.at_upper[leave] = False
                self.is_basic[leave] = False
                self.is_basic[j] = True
                self.head[r] = j
                piv = alpha[r]
                row = self.Binv[r] / piv
                alpha[r] = 0.0
                touched = np.flatnonzero(alpha)
                if len(touched):
                    self.Binv[touched] -= np.outer(alpha[touched], row)
                self.Binv[r] = row
                self.since_refactor += 1
                if abs(piv) < 1e-7:
                    self._refactor()
            if theta * abs(d[j]) <= 1e-12:
                stall += 1
                if stall > STALL_LIMIT:
                    bland = True
            else:
                stall = 0
                bland = False


def _presolve(c, A, lo, hi, lb, ub):
    """Drop fixed columns and rows that cannot bind. Returns None when an
    empty row or crossed bounds prove infeasibility."""
    if np.any(lb > ub + FEAS_TOL):
        return None
    fixed = ub - lb <= 1e-12
    keep_cols = np.flatnonzero(~fixed)
    shift = A[:, fixed] @ lb[fixed] if fixed.any() else np.zeros(A.shape[0])
    lo2, hi2 = lo - shift, hi - shift
    Af = A[:, keep_cols]
    lbf, ubf = lb[keep_cols], ub[keep_cols]
    pos, neg = np.maximum(Af, 0.0), np.minimum(Af, 0.0)
    amin = pos @ lbf + neg @ ubf
    amax = pos @ ubf + neg @ lbf
    mag = np.abs(Af) @ np.maximum(np.abs(lbf), np.abs(ubf)) + 1.0
    with np.errstate(invalid="ignore"):
        lo_ok = (amin >= lo2 - 1e-12 * (mag + np.abs(lo2))) | np.isneginf(lo2)
        hi_ok = (amax <= hi2 + 1e-12 * (mag + np.abs(hi2))) | np.isposinf(hi2)
        lo_dead = amax < lo2 - FEAS_TOL * (mag + np.abs(lo2))
        hi_dead = amin > hi2 + FEAS_TOL * (mag + np.abs(hi2))
    if np.any(lo_dead & ~np.isneginf(lo2)) or np.any(hi_dead & ~np.isposinf(hi2)):
        return None
    keep_rows = np.flatnonzero(~(lo_ok & hi_ok))
    return keep_cols, keep_rows, Af[keep_rows], lo2[keep_rows], hi2[keep_rows], lbf, ubf, fixed


def simplex(c, A, row_lo, row_hi, lb, ub, max_iter=None) -> LpSolution:
    """Maximize ``c @ x`` subject to ``row_lo <= A @ x <= row_hi`` and
    ``lb <= x <= ub``. Variable bounds must be finite."""
    c = np.asarray(c, dtype=float)
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    A = A.reshape(-1, len(c))
    lo = np.asarray(row_lo, dtype=float)
    hi = np.asarray(row_hi, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
        raise ValueError("simplex needs finite variable bounds")
    n_all, m_all = len(c), A.shape[0]

    pre = _presolve(c, A, lo, hi, lb, ub)
    if pre is None:
        return LpSolution(INFEASIBLE, None, float("nan"), 0)
    cols, rows, Ar, lor, hir, lbr, ubr, fixed = pre
    m, n = Ar.shape

    col_scale = np.maximum(np.abs(lbr), np.abs(ubr))
    col_scale[col_scale == 0] = 1.0
    As = Ar * col_scale
    row_scale = np.abs(As).max(axis=1) if n else np.ones(m)
    row_scale[row_scale == 0] = 1.0
    row_scale = 1.0 / row_scale
    As *= row_scale[:, None]
    cs = c[cols] * col_scale

    core = _Core(cs, As, lor * row_scale, hir * row_scale, lbr / col_scale, ubr / col_scale)
    max_iter = max_iter or 50 * (n + m) + 1000
    total = n + 2 * m
    if core.artificial_rows:
        cost1 = np.zeros(total)
        cost1[n + m + np.array(core.artificial_rows)] = -1.0
        status = core.run(cost1, max_iter)
        if status == ITERATION_LIMIT:
            return LpSolution(status, None, float("nan"), core.iterations)
        if core.z[n + m:].sum() > PHASE1_TOL:
            return LpSolution(INFEASIBLE, None, float("nan"), core.iterations)
        core.hi[n + m:] = 0.0
        core.z[n + m:] = np.clip(core.z[n + m:], 0.0, 0.0)
    cost2 = np.zeros(total)
    cost2[:n] = cs
    status = core.run(cost2, max_iter)
    if status != OPTIMAL:
        return LpSolution(status, None, float("nan"), core.iterations)

    x = lb.copy()
    x[cols] = np.clip(core.z[:n] * col_scale, lbr, ubr)
    y = core.duals(cost2)
    duals = np.zeros(m_all)
    duals[rows] = y * row_scale
    reduced = c - A.T @ duals
    return LpSolution(OPTIMAL, x, float(c @ x), core.iterations, duals, reduced)


def solve_lp(model, lb=None, ub=None, max_iter=None) -> LpSolution:
    """Solve the LP relaxation of ``model`` (integrality ignored), with
    optional replacement variable bounds."""
    row_lo, row_hi = model.row_bounds()
    return simplex(model.c, model.A, row_lo, row_hi,
                   model.lb if lb is None else lb,
                   model.ub if ub is None else ub, max_iter=max_iter)
