"""The k-means LP relaxation: encoding, the within-versus-cross distance
dominance necessary condition, and the xi-window dual certificate."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .geometry import ClusteringAssignment
from .lp import LpProblem, LpSolution, solve_lp

STRICTNESS_TOL = 1e-10    # on squared distances


@dataclass
class KMeansLpEncoding:
    """LP over z_pq with squared-distance costs; rows sum to one, off-diagonal
    entries are dominated by the row's diagonal, and the trace is k."""

    n_points: int
    k: int
    problem: LpProblem

    def z_index(self, p: int, q: int) -> int:
        return p * self.n_points + q

    def matrix(self, solution: LpSolution) -> np.ndarray:
        n = self.n_points
        return solution.x.reshape(n, n)

    def decode(self, solution: LpSolution, tol: float = 1e-6
               ) -> ClusteringAssignment | None:
        """Decode a broad-sense integral solution (entries in {0, 1/|A_p|})
        into a partition; None when the structure does not hold."""
        return decode_normalized_partition(self.matrix(solution), self.k, tol)


def decode_normalized_partition(z: np.ndarray, k: int, tol: float = 1e-6
                                ) -> ClusteringAssignment | None:
    """Interpret z as the normalized block matrix of a partition: row p takes
    the value 1/|A_p| exactly on p's cluster.  None if that fails."""
    n = z.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    next_label = 0
    for p in range(n):
        if labels[p] >= 0:
            continue
        support = np.flatnonzero(z[p] > tol)
        if support.size == 0 or labels[support].max(initial=-1) >= 0:
            return None
        level = 1.0 / support.size
        block = z[np.ix_(support, support)]
        if np.abs(block - level).max() > tol:
            return None
        rows = z[support]
        off = rows.sum(axis=1) - rows[:, support].sum(axis=1)
        if np.abs(off).max() > n * tol:
            return None
        labels[support] = next_label
        next_label += 1
    if next_label != k:
        return None
    return ClusteringAssignment(labels=labels, k=k)


def build_kmeans_lp(d2: np.ndarray, k: int) -> KMeansLpEncoding:
    """Compile the k-means LP over squared distances."""
    d2 = np.asarray(d2, dtype=np.float64)
    n = d2.shape[0]
    nvars = n * n
    cost = d2.ravel().copy()

    rows, cols, vals = [], [], []
    for p in range(n):
        for q in range(n):
            rows.append(p)
            cols.append(p * n + q)
            vals.append(1.0)
    for p in range(n):
        rows.append(n)
        cols.append(p * n + p)
        vals.append(1.0)
    a_eq = sparse.csr_matrix((vals, (rows, cols)), shape=(n + 1, nvars))
    b_eq = np.concatenate([np.ones(n), [float(k)]])

    rows, cols, vals = [], [], []
    r = 0
    for p in range(n):
        for q in range(n):
            if p == q:
                continue
            rows += [r, r]
            cols += [p * n + q, p * n + p]
            vals += [1.0, -1.0]
            r += 1
    a_ub = sparse.csr_matrix((vals, (rows, cols)), shape=(r, nvars))
    b_ub = np.zeros(r)

    problem = LpProblem(c=cost, a_eq=a_eq, b_eq=b_eq, a_ub=a_ub, b_ub=b_ub,
                        lower=np.zeros(nvars), upper=np.ones(nvars))
    return KMeansLpEncoding(n_points=n, k=k, problem=problem)


def _inner_outer(d2: np.ndarray, assignment: ClusteringAssignment):
    """Per point: worst same-cluster squared distance, best cross-cluster
    squared distance, and the same-cluster average (self included)."""
    n = d2.shape[0]
    labels = assignment.labels
    same = labels[:, None] == labels[None, :]
    m_in = np.where(same, d2, -np.inf).max(axis=1)
    m_out = np.where(~same, d2, np.inf).min(axis=1)
    sizes = np.bincount(labels, minlength=assignment.k)[labels]
    avg = np.where(same, d2, 0.0).sum(axis=1) / sizes
    return m_in, m_out, avg, sizes


def check_distance_dominance(d2: np.ndarray, assignment: ClusteringAssignment) -> dict:
    """Necessary condition for the LP to return this clustering: every
    within-cluster distance is strictly below every cross-cluster distance
    from the same point.  Reports a violating (p, q, r) triple otherwise."""
    d2 = np.asarray(d2, dtype=np.float64)
    m_in, m_out, _, _ = _inner_outer(d2, assignment)
    bad = np.flatnonzero(m_in >= m_out - STRICTNESS_TOL)
    if bad.size == 0:
        return {"holds": True, "violating_triple": None}
    p = int(bad[0])
    labels = assignment.labels
    same = labels == labels[p]
    q = int(np.argmax(np.where(same, d2[p], -np.inf)))
    r = int(np.argmin(np.where(~same, d2[p], np.inf)))
    return {"holds": False, "violating_triple": (p, q, r)}


@dataclass
class XiWindow:
    """Feasibility window for the cluster-uniform dual parameter xi."""

    m_in: np.ndarray
    m_out: np.ndarray
    avg: np.ndarray
    lo: float
    hi: float

    @property
    def nonempty(self) -> bool:
        return self.lo <= self.hi


def xi_window(d2: np.ndarray, assignment: ClusteringAssignment) -> XiWindow:
    d2 = np.asarray(d2, dtype=np.float64)
    m_in, m_out, avg, sizes = _inner_outer(d2, assignment)
    lo = float((sizes * (m_in - avg)).max())
    hi = float((sizes * (m_out - avg)).min())
    return XiWindow(m_in=m_in, m_out=m_out, avg=avg, lo=lo, hi=hi)


def certify_kmeans_lp(d2: np.ndarray, assignment: ClusteringAssignment) -> dict:
    """Dual certificate via the xi window; certified means the given
    clustering is LP-optimal, with xi picked at the window midpoint."""
    win = xi_window(d2, assignment)
    if not win.nonempty:
        return {"certified": False, "xi": None, "window": (win.lo, win.hi)}
    return {"certified": True, "xi": 0.5 * (win.lo + win.hi),
            "window": (win.lo, win.hi)}


def boundary_margin(delta: float) -> float:
    """Asymptotic feasibility margin (Delta - 2)^2 - 4 of the xi window for
    planted balls; zero exactly at the Delta = 4 threshold."""
    return (delta - 2.0) ** 2 - 4.0


def solve_kmeans_lp(d2: np.ndarray, k: int, backend: str = "auto"
                    ) -> tuple[KMeansLpEncoding, LpSolution]:
    enc = build_kmeans_lp(d2, k)
    return enc, solve_lp(enc.problem, backend=backend)
