"""The k-median LP relaxation and its exact-recovery machinery: the LP
encoding, the equal-slack dual construction, the separation and
center-dominance diagnostics, and the direct certificate check."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .geometry import ClusterInstance, ClusteringAssignment, euclidean_distances
from .lp import LpProblem, LpSolution, solve_lp, is_integral

ANCHOR_GRID_SIZE = 32
TAU_GRID = np.logspace(-3, 0, 16)
CERT_TOL = 1e-9


@dataclass
class KMedianLpEncoding:
    """LP over z_pq (p is the would-be center serving q) and opening
    indicators y_p; N + N^2 + 1 constraints."""

    n_points: int
    k: int
    problem: LpProblem

    def z_index(self, p: int, q: int) -> int:
        return p * self.n_points + q

    def y_index(self, p: int) -> int:
        return self.n_points ** 2 + p

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = self.n_points
        return x[: n * n].reshape(n, n), x[n * n:]

    def decode(self, solution: LpSolution, tol: float = 1e-6
               ) -> ClusteringAssignment | None:
        """Decode an integral solution; None when it is not 0/1 integral."""
        z, y = self.split(solution.x)
        if not (is_integral(z, tol) and is_integral(y, tol)):
            return None
        medoids = np.flatnonzero(y > 0.5)
        if medoids.size != self.k:
            return None
        labels = np.full(self.n_points, -1, dtype=np.int64)
        for rank, p in enumerate(medoids):
            labels[z[p] > 0.5] = rank
        if (labels < 0).any():
            return None
        return ClusteringAssignment(labels=labels, k=self.k, medoids=medoids)


def build_kmedian_lp(dist: np.ndarray, k: int) -> KMedianLpEncoding:
    """Compile the k-median LP over plain distances: assignment rows sum to
    one per client, z_pq <= y_p, and exactly k openings."""
    n = dist.shape[0]
    nz = n * n
    nvars = nz + n
    cost = np.concatenate([np.asarray(dist, dtype=np.float64).ravel(), np.zeros(n)])

    rows, cols, vals = [], [], []
    for q in range(n):
        for p in range(n):
            rows.append(q)
            cols.append(p * n + q)
            vals.append(1.0)
    for p in range(n):
        rows.append(n)
        cols.append(nz + p)
        vals.append(1.0)
    a_eq = sparse.csr_matrix((vals, (rows, cols)), shape=(n + 1, nvars))
    b_eq = np.concatenate([np.ones(n), [float(k)]])

    rows, cols, vals = [], [], []
    for p in range(n):
        for q in range(n):
            r = p * n + q
            rows += [r, r]
            cols += [p * n + q, nz + p]
            vals += [1.0, -1.0]
    a_ub = sparse.csr_matrix((vals, (rows, cols)), shape=(nz, nvars))
    b_ub = np.zeros(nz)

    problem = LpProblem(c=cost, a_eq=a_eq, b_eq=b_eq, a_ub=a_ub, b_ub=b_ub,
                        lower=np.zeros(nvars), upper=np.ones(nvars))
    return KMedianLpEncoding(n_points=n, k=k, problem=problem)


def opt_and_medoid(points: np.ndarray, cluster: np.ndarray) -> tuple[int, float]:
    """Best in-cluster center: the member minimizing the summed distance to
    the cluster (ties to the lowest point index).  Returns (index, OPT)."""
    cluster = np.asarray(cluster, dtype=np.int64)
    sub = euclidean_distances(np.asarray(points)[cluster])
    sums = sub.sum(axis=1)
    local = int(np.argmin(sums))            # argmin takes the first minimum
    return int(cluster[local]), float(sums[local])


def cluster_opts(points: np.ndarray, assignment: ClusteringAssignment
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Per-cluster (medoid index, OPT) arrays."""
    medoids, opts = [], []
    for members in assignment.clusters():
        med, opt = opt_and_medoid(points, members)
        medoids.append(med)
        opts.append(opt)
    return np.asarray(medoids, dtype=np.int64), np.asarray(opts)


def contribution_function(points: np.ndarray, assignment: ClusteringAssignment,
                          alphas: np.ndarray, y: np.ndarray) -> float:
    """Total payment a candidate center at y could collect: each cluster
    contributes (alpha_cluster - distance)_+ per member."""
    pts = np.asarray(points, dtype=np.float64)
    d = np.linalg.norm(pts - np.asarray(y, dtype=np.float64), axis=1)
    alpha_per_point = np.asarray(alphas)[assignment.labels]
    return float(np.clip(alpha_per_point - d, 0.0, None).sum())


def solve_equal_slack_alphas(opts: np.ndarray, n, anchor: float) -> np.ndarray:
    """Per-cluster dual levels with equal slack n_j*alpha_j - OPT_j across
    clusters; the free parameter is fixed by mean(alpha) = anchor."""
    opts = np.asarray(opts, dtype=np.float64)
    ns = np.broadcast_to(np.asarray(n, dtype=np.float64), opts.shape)
    slack = (anchor - float((opts / ns).mean())) / float((1.0 / ns).mean())
    return (slack + opts) / ns


def check_separation(instance: ClusterInstance, assignment: ClusteringAssignment) -> dict:
    """Disjoint-ball separation: the worst gap between planted balls must
    exceed the cluster-imbalance term (OPT_max - OPT_min)/n."""
    k = instance.k
    cdist = np.linalg.norm(
        instance.centers[:, None, :] - instance.centers[None, :, :], axis=2)
    deltas = cdist[~np.eye(k, dtype=bool)] - 2.0 * instance.radius
    theta = float(deltas.min()) if deltas.size else math.inf
    _, opts = cluster_opts(instance.points, assignment)
    rhs = float((opts.max() - opts.min()) / instance.n)
    return {"holds": bool(theta > rhs), "theta": theta, "slack_gap": theta - rhs}


def check_center_dominance(instance: ClusterInstance, assignment: ClusteringAssignment,
                           alphas: np.ndarray, tau_grid: np.ndarray = TAU_GRID) -> dict:
    """Sample-level center dominance: around each planted center there is a
    radius tau whose inhabitants see exactly their own ball under the alpha
    radii and collect the cluster's maximal contribution."""
    tau_grid = np.asarray(tau_grid, dtype=np.float64)
    if tau_grid.size == 0:
        raise ValueError("tau_grid must be nonempty")
    alphas = np.asarray(alphas, dtype=np.float64)
    pts = instance.points
    centers = instance.centers
    radius = instance.radius
    witness = np.full(instance.k, np.nan)
    contributions = np.array([
        contribution_function(pts, assignment, alphas, y) for y in pts])
    for j, members in enumerate(assignment.clusters()):
        dist_to_cj = np.linalg.norm(pts[members] - centers[j], axis=1)
        contrib = contributions[members]
        for tau in tau_grid:
            inside = dist_to_cj <= tau
            if not inside.any():
                continue
            inner_pts = pts[members[inside]]
            ok = True
            for i in range(instance.k):
                d_ci = np.linalg.norm(inner_pts - centers[i], axis=1)
                if i == j:
                    if (alphas[j] < d_ci + radius).any():
                        ok = False
                        break
                elif (alphas[i] + radius > d_ci).any():
                    ok = False
                    break
            if not ok:
                continue
            if (~inside).any() and contrib[~inside].max() >= contrib[inside].max():
                continue
            witness[j] = tau
            break
    holds = bool(np.isfinite(witness).all())
    return {"holds": holds, "witness_tau": witness}


def certify_kmedian(instance: ClusterInstance, assignment: ClusteringAssignment,
                    alphas: np.ndarray) -> dict:
    """Direct check of the equal-slack dual certificate inequality: the
    average slack must dominate every point's total contribution."""
    alphas = np.asarray(alphas, dtype=np.float64)
    pts = instance.points
    dist = euclidean_distances(pts)
    _, opts = cluster_opts(pts, assignment)
    sizes = np.array([len(c) for c in assignment.clusters()], dtype=np.float64)
    lhs = float((sizes * alphas - opts).mean())
    alpha_per_point = alphas[assignment.labels]
    rhs_all = np.clip(alpha_per_point[None, :] - dist, 0.0, None).sum(axis=1)
    argmax = int(np.argmax(rhs_all))
    max_rhs = float(rhs_all[argmax])
    certified = max_rhs <= lhs + CERT_TOL * (1.0 + abs(lhs))
    return {"certified": bool(certified), "lhs": lhs, "max_rhs": max_rhs,
            "argmax_point": argmax}


def anchor_grid(theta: float, count: int = ANCHOR_GRID_SIZE,
                radius: float = 1.0) -> np.ndarray:
    """Anchor sweep grid over (radius, radius + theta), ends nudged inward."""
    if theta <= 2e-6:
        return np.empty(0)
    return np.linspace(radius + 1e-6, radius + theta - 1e-6, count)


def certify_kmedian_sweep(instance: ClusterInstance,
                          assignment: ClusteringAssignment | None = None,
                          anchors: np.ndarray | None = None) -> dict:
    """Sweep equal-slack anchors and report the first certifying one, along
    with the separation/center-dominance diagnostics at that anchor."""
    if assignment is None:
        assignment = instance.planted_assignment()
    sep = check_separation(instance, assignment)
    if anchors is None:
        anchors = anchor_grid(sep["theta"], radius=instance.radius)
    _, opts = cluster_opts(instance.points, assignment)
    sizes = np.array([len(c) for c in assignment.clusters()], dtype=np.float64)
    best = None
    for anchor in anchors:
        alphas = solve_equal_slack_alphas(opts, sizes, float(anchor))
        res = certify_kmedian(instance, assignment, alphas)
        if best is None or res["max_rhs"] - res["lhs"] < best["max_rhs"] - best["lhs"]:
            best = {**res, "anchor": float(anchor), "alphas": alphas}
        if res["certified"]:
            best = {**res, "anchor": float(anchor), "alphas": alphas}
            break
    if best is None:
        best = {"certified": False, "lhs": math.nan, "max_rhs": math.nan,
                "argmax_point": -1, "anchor": math.nan,
                "alphas": np.full(instance.k, math.nan)}
    dom = check_center_dominance(instance, assignment, best["alphas"]) \
        if np.isfinite(best["alphas"]).all() else {"holds": False, "witness_tau": None}
    return {
        "certified": best["certified"],
        "anchor": best["anchor"],
        "alphas": best["alphas"],
        "theta": sep["theta"],
        "separation_holds": sep["holds"],
        "center_dominance_holds": dom["holds"],
        "witness_tau": dom["witness_tau"],
        "lhs": best["lhs"],
        "max_rhs": best["max_rhs"],
        "argmax_point": best["argmax_point"],
    }


def solve_kmedian_lp(points: np.ndarray, k: int, backend: str = "auto"
                     ) -> tuple[KMedianLpEncoding, LpSolution]:
    enc = build_kmedian_lp(euclidean_distances(np.asarray(points, float)), k)
    return enc, solve_lp(enc.problem, backend=backend)
