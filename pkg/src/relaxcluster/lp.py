"""Generic dense LP solving.

Two backends behind one contract: a from-scratch bounded-variable revised
simplex with Bland's anti-cycling rule (deterministic; used at small sizes
and as a reference), and scipy's HiGHS (used for the large clustering
encodings).  Both return primal values, per-constraint duals, and status.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .serialize import fmt_real


class LpNumericalError(RuntimeError):
    """Pivot breakdown or iteration blow-up: distinct from infeasible/unbounded."""


# auto backend routing: the simplex handles desk-scale encodings, HiGHS the rest
SIMPLEX_MAX_ROWS = 320
SIMPLEX_MAX_COLS = 700


@dataclass
class LpProblem:
    """min c'x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  l <= x <= u."""

    c: np.ndarray
    a_eq: object | None = None          # ndarray or scipy sparse
    b_eq: np.ndarray | None = None
    a_ub: object | None = None
    b_ub: np.ndarray | None = None
    lower: np.ndarray | None = None     # default 0
    upper: np.ndarray | None = None     # default +inf
    variable_names: list | None = None
    constraint_names: list | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64)
        n = self.c.size
        if not np.isfinite(self.c).all():
            raise ValueError("costs must be finite")
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, float)
        if not np.isfinite(self.lower).all():
            raise ValueError("lower bounds must be finite")
        if (self.lower > self.upper).any():
            raise ValueError("lower bound exceeds upper bound")
        for mat, rhs, tag in ((self.a_eq, self.b_eq, "eq"), (self.a_ub, self.b_ub, "ub")):
            if (mat is None) != (rhs is None):
                raise ValueError(f"A_{tag} and b_{tag} must come together")
            if mat is not None and mat.shape != (np.asarray(rhs).size, n):
                raise ValueError(f"A_{tag} shape inconsistent")
        if self.b_eq is not None:
            self.b_eq = np.asarray(self.b_eq, dtype=np.float64)
        if self.b_ub is not None:
            self.b_ub = np.asarray(self.b_ub, dtype=np.float64)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        m = 0
        if self.b_eq is not None:
            m += self.b_eq.size
        if self.b_ub is not None:
            m += self.b_ub.size
        return m


@dataclass
class LpSolution:
    status: str                       # optimal | infeasible | unbounded
    x: np.ndarray | None
    objective: float | None
    duals_eq: np.ndarray | None
    duals_ub: np.ndarray | None
    reduced_costs: np.ndarray | None
    basis: np.ndarray | None          # bool per variable
    backend: str
    iterations: int = 0


def _dense(mat) -> np.ndarray:
    if mat is None:
        return None
    if sparse.issparse(mat):
        return mat.toarray()
    return np.asarray(mat, dtype=np.float64)


def solution_residuals(problem: LpProblem, sol: LpSolution) -> dict:
    """Primal feasibility, duality gap, and complementary slackness of an
    optimal solution (all should be tiny)."""
    x = sol.x
    feas = 0.0
    if problem.a_eq is not None:
        feas = max(feas, float(np.abs(problem.a_eq @ x - problem.b_eq).max(initial=0.0)))
    slack = None
    if problem.a_ub is not None:
        slack = problem.b_ub - problem.a_ub @ x
        feas = max(feas, float(np.maximum(-slack, 0.0).max(initial=0.0)))
    feas = max(feas, float(np.maximum(problem.lower - x, 0.0).max(initial=0.0)))
    finite_up = np.isfinite(problem.upper)
    if finite_up.any():
        feas = max(feas, float(np.maximum((x - problem.upper)[finite_up], 0.0).max(initial=0.0)))

    rc = sol.reduced_costs
    dual_obj = 0.0
    if problem.b_eq is not None:
        dual_obj += float(problem.b_eq @ sol.duals_eq)
    if problem.b_ub is not None:
        dual_obj += float(problem.b_ub @ sol.duals_ub)
    pos = np.clip(rc, 0.0, None)
    neg = np.clip(rc, None, 0.0)
    dual_obj += float(pos @ problem.lower)
    dual_obj += float((neg * np.where(finite_up, problem.upper, 0.0)).sum())
    gap = abs(float(problem.c @ x) - dual_obj)

    comp = 0.0
    if slack is not None and sol.duals_ub is not None:
        comp = max(comp, float(np.abs(sol.duals_ub * slack).max(initial=0.0)))
    comp = max(comp, float(np.abs(pos * (x - problem.lower)).max(initial=0.0)))
    up_gap = np.where(finite_up, problem.upper - x, 0.0)
    comp = max(comp, float(np.abs(neg * up_gap).max(initial=0.0)))
    return {"primal_feasibility": feas, "duality_gap": gap, "complementary_slackness": comp}


def _solve_highs(problem: LpProblem) -> LpSolution:
    bounds = list(zip(problem.lower, [u if np.isfinite(u) else None for u in problem.upper]))
    res = linprog(problem.c, A_ub=problem.a_ub, b_ub=problem.b_ub,
                  A_eq=problem.a_eq, b_eq=problem.b_eq, bounds=bounds,
                  method="highs")
    if res.status == 2:
        return LpSolution("infeasible", None, None, None, None, None, None, "highs")
    if res.status == 3:
        return LpSolution("unbounded", None, None, None, None, None, None, "highs")
    if res.status != 0:
        raise LpNumericalError(f"HiGHS failed: {res.message}")
    x = np.asarray(res.x)
    duals_eq = np.asarray(res.eqlin.marginals) if problem.a_eq is not None else None
    duals_ub = np.asarray(res.ineqlin.marginals) if problem.a_ub is not None else None
    rc = problem.c.copy()
    if problem.a_eq is not None:
        rc = rc - problem.a_eq.T @ duals_eq
    if problem.a_ub is not None:
        rc = rc - problem.a_ub.T @ duals_ub
    interior = (x > problem.lower + 1e-9) & (x < problem.upper - 1e-9)
    return LpSolution("optimal", x, float(problem.c @ x), duals_eq, duals_ub,
                      np.asarray(rc), interior, "highs",
                      iterations=int(getattr(res, "nit", 0)))


class _Simplex:
    """Bounded-variable revised simplex, Bland's rule, explicit basis inverse
    refreshed every 100 pivots."""

    RC_TOL = 1e-9
    PIV_TOL = 1e-11
    FEAS_TOL = 1e-8
    REFRESH = 100

    def __init__(self, problem: LpProblem):
        self.problem = problem
        a_eq, a_ub = _dense(problem.a_eq), _dense(problem.a_ub)
        n = problem.n_vars
        self.m_eq = 0 if a_eq is None else a_eq.shape[0]
        self.m_ub = 0 if a_ub is None else a_ub.shape[0]
        m = self.m_eq + self.m_ub
        n_slack = self.m_ub
        self.n_struct = n
        self.n_total = n + n_slack + m          # structurals, slacks, artificials
        A = np.zeros((m, self.n_total))
        b = np.zeros(m)
        if a_eq is not None:
            A[:self.m_eq, :n] = a_eq
            b[:self.m_eq] = problem.b_eq
        if a_ub is not None:
            A[self.m_eq:, :n] = a_ub
            b[self.m_eq:] = problem.b_ub
            A[self.m_eq:, n:n + n_slack] = np.eye(n_slack)
        # shift structural lower bounds to zero
        self.shift = np.zeros(self.n_total)
        self.shift[:n] = problem.lower
        b = b - A[:, :n] @ problem.lower
        sign = np.where(b < 0, -1.0, 1.0)
        for i in range(m):
            A[i, n + n_slack + i] = sign[i]
        self.A = A
        self.b = b
        self.m = m
        self.lo = np.zeros(self.n_total)
        self.up = np.full(self.n_total, np.inf)
        self.up[:n] = problem.upper - problem.lower
        self.art = np.arange(n + n_slack, self.n_total)
        self.status = np.zeros(self.n_total, dtype=np.int8)   # 0 lower, 1 upper, 2 basic
        self.basic = self.art.copy()
        self.status[self.basic] = 2
        self.xb = np.abs(b)
        self.binv = np.diag(sign)
        self.pivots = 0

    def _values(self) -> np.ndarray:
        x = np.where(self.status == 1, self.up, self.lo).astype(float)
        x[self.basic] = self.xb
        return x

    def _refresh(self):
        self.binv = np.linalg.inv(self.A[:, self.basic])
        x = np.where(self.status == 1, self.up, self.lo).astype(float)
        x[self.basic] = 0.0
        self.xb = self.binv @ (self.b - self.A @ x)

    def _iterate(self, cost: np.ndarray, allow: np.ndarray) -> str:
        """Run simplex pivots for the given cost until optimal/unbounded."""
        guard = 200 * (self.m + self.n_total) + 2000
        for _ in range(guard):
            y = cost[self.basic] @ self.binv
            rc = cost - y @ self.A
            at_lo = (self.status == 0) & allow & (rc < -self.RC_TOL)
            at_up = (self.status == 1) & allow & (rc > self.RC_TOL)
            candidates = np.flatnonzero(at_lo | at_up)
            if candidates.size == 0:
                return "optimal"
            j = int(candidates[0])                     # Bland: lowest index
            up_move = self.status[j] == 0
            d = self.binv @ self.A[:, j]
            step = d if up_move else -d
            # entering moves by t >= 0; basic values move by -t*step
            with np.errstate(divide="ignore", invalid="ignore"):
                t_dec = np.where(step > self.PIV_TOL,
                                 (self.xb - self.lo[self.basic]) / step, np.inf)
                fin_up = np.isfinite(self.up[self.basic])
                t_inc = np.where((step < -self.PIV_TOL) & fin_up,
                                 (self.up[self.basic] - self.xb) / (-step), np.inf)
            t_row = np.minimum(t_dec, t_inc)
            t_min = float(t_row.min(initial=np.inf))
            t_flip = self.up[j] - self.lo[j]
            if not (np.isfinite(t_min) or np.isfinite(t_flip)):
                return "unbounded"
            if t_flip <= t_min:
                # bound flip: entering variable traverses to its other bound
                self.xb = self.xb - t_flip * step
                self.status[j] = 1 - self.status[j]
            else:
                t_star = max(t_min, 0.0)
                halo = 1e-9 * (1.0 + abs(t_star))
                tie = np.flatnonzero(t_row <= t_star + halo)
                order = tie[np.argsort(self.basic[tie], kind="stable")]  # Bland leaving
                row = next((int(r) for r in order if abs(step[r]) >= self.PIV_TOL), None)
                if row is None:
                    raise LpNumericalError("pivot element below threshold")
                leaving = int(self.basic[row])
                self.xb = self.xb - t_star * step
                self.status[leaving] = 0 if step[row] > 0 else 1
                self.basic[row] = j
                self.status[j] = 2
                self.xb[row] = (self.lo[j] + t_star) if up_move else (self.up[j] - t_star)
                piv = d[row]
                self.binv[row] /= piv
                other = np.arange(self.m) != row
                self.binv[other] -= np.outer(d[other], self.binv[row])
            self.pivots += 1
            if self.pivots % self.REFRESH == 0:
                self._refresh()
        raise LpNumericalError("simplex iteration limit exceeded")

    def solve(self) -> LpSolution:
        n, m = self.n_total, self.m
        # phase 1: minimize artificial sum
        cost1 = np.zeros(n)
        cost1[self.art] = 1.0
        allow = np.ones(n, dtype=bool)
        st = self._iterate(cost1, allow)
        if st != "optimal":
            raise LpNumericalError("phase 1 terminated abnormally")
        art_sum = float(self._values()[self.art].sum())
        if art_sum > self.FEAS_TOL * (1.0 + np.abs(self.b).max(initial=0.0)):
            return LpSolution("infeasible", None, None, None, None, None, None, "simplex",
                              iterations=self.pivots)
        # pin artificials and try to pivot basic ones out (degenerate pivots)
        self.up[self.art] = 0.0
        for row in range(m):
            v = int(self.basic[row])
            if v >= self.art[0]:
                cols = self.binv[row] @ self.A[:, :self.art[0]]
                good = [int(j) for j in np.flatnonzero(np.abs(cols) > 1e-9)
                        if self.status[j] != 2]
                if good:
                    j = good[0]
                    self.status[v] = 0
                    self.basic[row] = j
                    self.status[j] = 2
                    self._refresh()
        cost2 = np.zeros(n)
        cost2[:self.n_struct] = self.problem.c
        allow = np.ones(n, dtype=bool)
        allow[self.art] = False
        st = self._iterate(cost2, allow)
        if st == "unbounded":
            return LpSolution("unbounded", None, None, None, None, None, None, "simplex",
                              iterations=self.pivots)
        vals = self._values()
        x = vals[:self.n_struct] + self.shift[:self.n_struct]
        y = cost2[self.basic] @ self.binv
        rc_struct = self.problem.c - y @ self.A[:, :self.n_struct]
        duals_eq = y[:self.m_eq] if self.m_eq else None
        duals_ub = y[self.m_eq:] if self.m_ub else None
        basis = np.zeros(self.n_struct, dtype=bool)
        basis[self.basic[self.basic < self.n_struct]] = True
        return LpSolution("optimal", x, float(self.problem.c @ x), duals_eq, duals_ub,
                          rc_struct, basis, "simplex", iterations=self.pivots)


def solve_lp(problem: LpProblem, backend: str = "auto") -> LpSolution:
    """Solve an LpProblem.  backend: 'simplex', 'highs', or 'auto' (simplex
    at desk scale, HiGHS above)."""
    if backend == "auto":
        small = (problem.n_rows <= SIMPLEX_MAX_ROWS and problem.n_vars <= SIMPLEX_MAX_COLS)
        backend = "simplex" if small else "highs"
    if backend == "simplex":
        return _Simplex(problem).solve()
    if backend == "highs":
        return _solve_highs(problem)
    raise ValueError(f"unknown backend {backend!r}")


def is_integral(values: np.ndarray, tol: float = 1e-6,
                levels=(0.0, 1.0)) -> bool:
    """True when every entry is within tol of some allowed level."""
    vals = np.asarray(values, dtype=np.float64)
    levels = np.asarray(levels, dtype=np.float64)
    dist = np.abs(vals[..., None] - levels).min(axis=-1)
    return bool((dist <= tol).all())


def round_near_integral(values: np.ndarray, levels=(0.0, 1.0)) -> np.ndarray:
    """Snap each entry to its nearest allowed level."""
    vals = np.asarray(values, dtype=np.float64)
    levels = np.asarray(levels, dtype=np.float64)
    idx = np.abs(vals[..., None] - levels).argmin(axis=-1)
    return levels[idx]


def dump_problem(problem: LpProblem) -> str:
    """Plain-text fixed dump (objective row, then constraint rows) for
    external cross-checking."""
    lines = ["min"]
    lines.append("c: " + " ".join(fmt_real(v) for v in problem.c))
    a_eq, a_ub = _dense(problem.a_eq), _dense(problem.a_ub)
    if a_eq is not None:
        for row, rhs in zip(a_eq, problem.b_eq):
            lines.append("eq " + fmt_real(rhs) + ": " + " ".join(fmt_real(v) for v in row))
    if a_ub is not None:
        for row, rhs in zip(a_ub, problem.b_ub):
            lines.append("ub " + fmt_real(rhs) + ": " + " ".join(fmt_real(v) for v in row))
    lines.append("lower: " + " ".join(fmt_real(v) for v in problem.lower))
    lines.append("upper: " + " ".join(fmt_real(v) for v in problem.upper))
    return "\n".join(lines) + "\n"
