"""The k-means SDP relaxation: the block dual certificate (z, alpha, Q,
beta), the average-separation conditions in matrix and point form, the
closed-form separation margin and threshold formulas, and a consensus-ADMM
solver for the SDP itself."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .geometry import ClusteringAssignment, SquaredDistanceMatrix
from .kmeans_lp import decode_normalized_partition

Z_MARGIN = 1e-6          # z = z* + Z_MARGIN*(1 + z*) for certification
PSD_TOL = 1e-8           # relative to max |Q| entry
NULLSPACE_TOL = 1e-7     # relative to lambda_max


def _as_d2(d2) -> np.ndarray:
    if isinstance(d2, SquaredDistanceMatrix):
        return d2.values
    return np.asarray(d2, dtype=np.float64)


def _equal_cluster_blocks(assignment: ClusteringAssignment) -> tuple[list[np.ndarray], int]:
    clusters = assignment.clusters()
    sizes = {len(c) for c in clusters}
    if len(sizes) != 1:
        raise ValueError("certificate construction requires equal cluster sizes")
    return clusters, sizes.pop()


@dataclass
class SdpCertificate:
    z: float
    alpha: np.ndarray          # length N, grouped by cluster
    q: np.ndarray              # N x N
    beta: np.ndarray           # N x N, zero on diagonal blocks
    clusters: list
    n: int
    diagnostics: dict = field(default_factory=dict)


def build_certificate(d2, assignment: ClusteringAssignment, z: float) -> SdpCertificate:
    """Assemble the dual certificate for the normalized block solution.

    alpha comes from the diagonal-block stationarity identities, the
    off-diagonal blocks of Q are pinned to the doubly-centered cross-block
    distances, and beta is whatever makes the block identities exact.
    """
    d2 = _as_d2(d2)
    clusters, n = _equal_cluster_blocks(assignment)
    big_n = d2.shape[0]
    k = assignment.k
    alpha = np.zeros(big_n)
    q = np.zeros((big_n, big_n))
    beta = np.zeros((big_n, big_n))

    row_sums = {}
    block_sums = {}
    for a, mem_a in enumerate(clusters):
        daa = d2[np.ix_(mem_a, mem_a)]
        row_sums[a] = daa.sum(axis=1)
        block_sums[a] = float(daa.sum())
        alpha[mem_a] = (-z / n + block_sums[a] / n ** 2 - 2.0 * row_sums[a] / n)

    for a, mem_a in enumerate(clusters):
        daa = d2[np.ix_(mem_a, mem_a)]
        al = alpha[mem_a]
        q_aa = z * np.eye(n) + 0.5 * (al[:, None] + al[None, :]) + daa
        q[np.ix_(mem_a, mem_a)] = q_aa
        for b, mem_b in enumerate(clusters):
            if b <= a:
                continue
            dab = d2[np.ix_(mem_a, mem_b)]
            rmean = dab.sum(axis=1) / n
            cmean = dab.sum(axis=0) / n
            bmean = float(dab.sum()) / n ** 2
            q_ab = rmean[:, None] + cmean[None, :] - dab - bmean
            q[np.ix_(mem_a, mem_b)] = q_ab
            q[np.ix_(mem_b, mem_a)] = q_ab.T
            # beta restores the block identity Q^(ab) = (alpha terms)/2 - beta/2 + D^(ab)
            b_ab = alpha[mem_a][:, None] + alpha[mem_b][None, :] + 2.0 * dab - 2.0 * q_ab
            beta[np.ix_(mem_a, mem_b)] = b_ab
            beta[np.ix_(mem_b, mem_a)] = b_ab.T

    dual_objective = k * z + float(alpha.sum())
    min_beta = 0.0
    if k > 1:
        off = ~_block_diag_mask(clusters, big_n)
        min_beta = float(beta[off].min())
    cert = SdpCertificate(z=float(z), alpha=alpha, q=q, beta=beta,
                          clusters=clusters, n=n)
    cert.diagnostics.update({
        "dual_objective": dual_objective,
        "min_beta": min_beta,
        "planted_primal_objective": -sum(block_sums[a] for a in range(k)) / n,
    })
    return cert


def _block_diag_mask(clusters, big_n: int) -> np.ndarray:
    mask = np.zeros((big_n, big_n), dtype=bool)
    for mem in clusters:
        mask[np.ix_(mem, mem)] = True
    return mask


def planted_sdp_matrix(assignment: ClusteringAssignment) -> np.ndarray:
    """The normalized block matrix (1/n_a on each cluster block)."""
    labels = assignment.labels
    big_n = labels.size
    x = np.zeros((big_n, big_n))
    for mem in assignment.clusters():
        x[np.ix_(mem, mem)] = 1.0 / len(mem)
    return x


def z_star(points: np.ndarray, assignment: ClusteringAssignment) -> float:
    """Four times the largest Rayleigh quotient of a cluster's coordinate
    Gram matrix over vectors orthogonal to all-ones (centering immaterial)."""
    pts = np.asarray(points, dtype=np.float64)
    best = 0.0
    for mem in assignment.clusters():
        gram = pts[mem] @ pts[mem].T
        best = max(best, linalg.max_rayleigh_perp_ones(gram))
    return 4.0 * best


def z_star_from_sq_distances(d2, assignment: ClusteringAssignment) -> float:
    """Same quantity computed from squared distances alone via the centered
    identity P D^(aa) P = -2 P M M' P."""
    d2 = _as_d2(d2)
    best = 0.0
    for mem in assignment.clusters():
        daa = d2[np.ix_(mem, mem)]
        best = max(best, linalg.max_rayleigh_perp_ones(-0.5 * daa))
    return 4.0 * best


def _separation_margins_matrix(d2: np.ndarray, clusters, n: int) -> dict:
    """Margins of the average-separation inequality per cross pair (without
    the z*/n term): LHS(a,b,r,s) - coupling terms."""
    k = len(clusters)
    worst = math.inf
    worst_pair = None
    for a in range(k):
        mem_a = clusters[a]
        daa = d2[np.ix_(mem_a, mem_a)]
        ra = daa.sum(axis=1) / n
        sa = float(daa.sum()) / n ** 2
        for b in range(a + 1, k):
            mem_b = clusters[b]
            dbb = d2[np.ix_(mem_b, mem_b)]
            rb = dbb.sum(axis=1) / n
            sb = float(dbb.sum()) / n ** 2
            dab = d2[np.ix_(mem_a, mem_b)]
            rmean = dab.sum(axis=1) / n
            cmean = dab.sum(axis=0) / n
            bmean = float(dab.sum()) / n ** 2
            lhs = 2.0 * dab - rmean[:, None] - cmean[None, :] + bmean
            rhs = ra[:, None] + rb[None, :] - 0.5 * (sa + sb)
            marg = lhs - rhs
            pos = np.unravel_index(np.argmin(marg), marg.shape)
            if marg[pos] < worst:
                worst = float(marg[pos])
                worst_pair = (a, b, int(pos[0]), int(pos[1]))
    return {"margin": worst, "pair": worst_pair}


def check_average_separation_matrix(d2, assignment: ClusteringAssignment) -> dict:
    """Average separation in squared-distance form, strict against z*/n."""
    d2 = _as_d2(d2)
    clusters, n = _equal_cluster_blocks(assignment)
    zs = z_star_from_sq_distances(d2, assignment)
    raw = _separation_margins_matrix(d2, clusters, n)
    margin = raw["margin"] - zs / n
    boundary = abs(margin) <= 1e-12 * (1.0 + abs(zs) / n)
    return {"holds": bool(margin > 0.0), "worst_margin": margin,
            "worst_pair": raw["pair"], "z_star": zs, "boundary": bool(boundary)}


def check_average_separation_points(points: np.ndarray,
                                    assignment: ClusteringAssignment) -> dict:
    """Average separation in point form (pairwise distances against cluster
    means); algebraically identical to the matrix form."""
    pts = np.asarray(points, dtype=np.float64)
    clusters, n = _equal_cluster_blocks(assignment)
    means = np.stack([pts[mem].mean(axis=0) for mem in clusters])
    zs = z_star(pts, assignment)
    k = len(clusters)
    worst = math.inf
    worst_pair = None
    for a in range(k):
        xa = means[a]
        pa = pts[clusters[a]]
        for b in range(a + 1, k):
            xb = means[b]
            pb = pts[clusters[b]]
            d_rs = ((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2)
            d_rb = ((pa - xb) ** 2).sum(axis=1)
            d_sa = ((pb - xa) ** 2).sum(axis=1)
            d_ra = ((pa - xa) ** 2).sum(axis=1)
            d_sb = ((pb - xb) ** 2).sum(axis=1)
            d_ab = float(((xa - xb) ** 2).sum())
            lhs = (2.0 * d_rs - d_rb[:, None] - d_sa[None, :]
                   - d_ra[:, None] - d_sb[None, :] + d_ab)
            pos = np.unravel_index(np.argmin(lhs), lhs.shape)
            if lhs[pos] < worst:
                worst = float(lhs[pos])
                worst_pair = (a, b, int(pos[0]), int(pos[1]))
    margin = worst - zs / n
    return {"holds": bool(margin > 0.0), "worst_margin": margin,
            "worst_pair": worst_pair, "z_star": zs}


def separation_lhs_minimum(delta: float) -> float:
    """Closed-form minimum of the average-separation left-hand side over two
    unit balls at center distance delta; positive for delta > 2*sqrt(2)."""
    if delta <= 4.0:
        return delta ** 2 / 2.0 - 4.0
    return (delta - 2.0) ** 2


def uniform_ball_second_moment(m: int) -> float:
    """E ||x||^2 for the uniform distribution on the unit ball in R^m."""
    return m / (m + 2.0)


def sdp_threshold(m: int, theta: float, s: float = 0.0) -> float:
    """Separation sufficient for recovery at finite slack parameter s:
    sqrt(8 (1+s)^2 theta / m + 8)."""
    return math.sqrt(8.0 * (1.0 + s) ** 2 * theta / m + 8.0)


def sdp_threshold_limit(m: int, theta: float) -> float:
    """Large-n limiting form 2*sqrt(2)*(1 + sqrt(theta/m))."""
    return 2.0 * math.sqrt(2.0) * (1.0 + math.sqrt(theta / m))


def verify_certificate(cert: SdpCertificate, d2, assignment: ClusteringAssignment) -> dict:
    """Validate a built certificate: block annihilation Q 1_a = 0, beta >= 0,
    positive semidefiniteness away from the cluster indicators, the dual
    objective identity, and (for uniqueness) nullspace dimension exactly k."""
    d2 = _as_d2(d2)
    clusters, n = _equal_cluster_blocks(assignment)
    k = assignment.k
    q = cert.q
    q_scale = float(np.abs(q).max(initial=0.0)) or 1.0

    q1_resid = 0.0
    for mem in clusters:
        q1_resid = max(q1_resid, float(np.abs(q[:, mem].sum(axis=1)).max()))
    q1_ok = q1_resid <= 1e-8 * q_scale

    min_beta = cert.diagnostics.get("min_beta", 0.0)
    beta_ok = min_beta >= -1e-9 * (1.0 + float(np.abs(d2).max(initial=0.0)))

    dual_obj = cert.diagnostics["dual_objective"]
    planted_obj = cert.diagnostics["planted_primal_objective"]
    obj_ok = abs(dual_obj - planted_obj) <= 1e-8 * (1.0 + abs(planted_obj))

    # shift the cluster-indicator span upward, then the smallest eigenvalue
    # seen is the smallest over the complement
    shift = 2.0 * q_scale * (1.0 + n)
    shifted = q.copy()
    for mem in clusters:
        shifted[np.ix_(mem, mem)] += shift / n
    dec = linalg.eigh(shifted)
    min_eig = float(dec.eigenvalues[0])
    psd_ok = min_eig >= -PSD_TOL * q_scale

    null_dim = linalg.nullspace_dimension(q, tol=NULLSPACE_TOL)
    valid = bool(q1_ok and beta_ok and psd_ok and obj_ok)
    unique = bool(valid and null_dim == k)
    cert.diagnostics.update({"min_eig_Q": min_eig, "nullspace_dim": null_dim})
    return {
        "valid": valid,
        "unique": unique,
        "report": {
            "q_annihilation_residual": q1_resid,
            "min_beta": min_beta,
            "min_eig_complement": min_eig,
            "nullspace_dim": null_dim,
            "dual_objective": dual_obj,
            "planted_primal_objective": planted_obj,
        },
    }


def certify_planted(d2, assignment: ClusteringAssignment) -> tuple[SdpCertificate, dict]:
    """Build and verify the certificate at z = z* + margin."""
    d2 = _as_d2(d2)
    zs = z_star_from_sq_distances(d2, assignment)
    z = zs + Z_MARGIN * (1.0 + zs)
    cert = build_certificate(d2, assignment, z)
    return cert, verify_certificate(cert, d2, assignment)


@dataclass
class AdmmConfig:
    rho: float = 1.0
    tol: float = 1e-6
    max_iter: int = 50000
    check_every: int = 25


@dataclass
class SdpSolution:
    x: np.ndarray
    objective: float           # -tr(DX)
    residuals: dict
    iterations: int
    converged: bool

    def decode(self, k: int, tol: float = 1e-4) -> ClusteringAssignment | None:
        return decode_normalized_partition(self.x, k, tol)


def _project_affine(a: np.ndarray, k: float) -> np.ndarray:
    """Projection onto {X symmetric, X1 = 1, tr X = k} via the closed-form
    solve of the (N+1)-variable multiplier system."""
    big_n = a.shape[0]
    a = 0.5 * (a + a.T)
    row = a.sum(axis=1)
    tr = float(np.trace(a))
    total = float(row.sum())
    if big_n == 1:
        return np.array([[1.0]])
    s = (big_n - total - (k - tr)) / (big_n - 1.0)
    mu = (k - tr - s) / big_n
    lam = (2.0 / big_n) * (1.0 - row - mu) - (s / big_n)
    x = a + 0.5 * (lam[:, None] + lam[None, :]) + mu * np.eye(big_n)
    return x


def solve_sdp_admm(d2, k: int, config: AdmmConfig | None = None) -> SdpSolution:
    """Consensus ADMM for max -tr(DX) over {tr X = k, X1 = 1, X >= 0, X PSD}:
    one block per constraint set, the linear objective folded into the
    consensus update."""
    if config is None:
        config = AdmmConfig()
    d2 = _as_d2(d2)
    big_n = d2.shape[0]
    scale = float(np.abs(d2).max(initial=0.0)) or 1.0
    d_hat = d2 / scale
    rho = config.rho

    z = np.full((big_n, big_n), k / big_n)
    xs = [z.copy() for _ in range(3)]
    us = [np.zeros((big_n, big_n)) for _ in range(3)]
    grad_term = d_hat / (3.0 * rho)

    converged = False
    it = 0
    residuals = {}
    for it in range(1, config.max_iter + 1):
        xs[0] = _project_affine(z - us[0], float(k))
        xs[1] = np.clip(z - us[1], 0.0, None)
        xs[2] = linalg.psd_project(z - us[2])
        z_new = (xs[0] + us[0] + xs[1] + us[1] + xs[2] + us[2]) / 3.0 - grad_term
        z_new = 0.5 * (z_new + z_new.T)
        for i in range(3):
            us[i] += xs[i] - z_new
        shift_norm = float(np.linalg.norm(z_new - z))
        z = z_new
        if it % config.check_every == 0 or it == config.max_iter:
            norm = 1.0 + float(np.linalg.norm(z))
            consensus = max(float(np.linalg.norm(xs[i] - z)) for i in range(3))
            affine = max(float(np.abs(z.sum(axis=1) - 1.0).max()),
                         abs(float(np.trace(z)) - k))
            nonneg = float(np.linalg.norm(np.clip(z, None, 0.0)))
            dual_shift = 3.0 * rho * shift_norm
            residuals = {"consensus": consensus, "affine": affine,
                         "nonneg": nonneg, "psd": float(np.linalg.norm(xs[2] - z))}
            if max(consensus, affine, nonneg, dual_shift) <= config.tol * norm:
                converged = True
                break
    eigs = np.linalg.eigvalsh(0.5 * (z + z.T))
    residuals["psd"] = float(max(0.0, -eigs[0]))
    objective = -float((d2 * z).sum())
    return SdpSolution(x=z, objective=objective, residuals=residuals,
                       iterations=it, converged=converged)
