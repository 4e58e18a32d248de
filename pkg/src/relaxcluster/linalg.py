"""Dense symmetric eigen-machinery for the SDP certificate and solver:
cyclic Jacobi eigendecomposition, PSD projection, restricted Rayleigh
quotients, and nullspace dimension."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Tolerances:
    """All linalg tolerances in one place."""

    jacobi_offdiag: float = 1e-12     # relative to the Frobenius norm
    jacobi_max_sweeps: int = 100
    reconstruction: float = 1e-9
    psd_clip: float = 1e-9
    nullspace: float = 1e-8


DEFAULT_TOLS = Tolerances()


@dataclass(frozen=True)
class SymmetricMatrix:
    """Packed upper-triangular storage; symmetric by representation."""

    order: int
    packed: np.ndarray    # row-major upper triangle, length n(n+1)/2

    @classmethod
    def from_dense(cls, a: np.ndarray, tol: float = 1e-9) -> "SymmetricMatrix":
        a = np.asarray(a, dtype=np.float64)
        n = a.shape[0]
        if a.shape != (n, n):
            raise ValueError("matrix must be square")
        scale = max(1.0, float(np.abs(a).max(initial=0.0)))
        if np.abs(a - a.T).max(initial=0.0) > tol * scale:
            raise ValueError("matrix is not symmetric within tolerance")
        sym = 0.5 * (a + a.T)
        iu = np.triu_indices(n)
        return cls(order=n, packed=sym[iu].copy())

    def to_dense(self) -> np.ndarray:
        n = self.order
        a = np.zeros((n, n))
        iu = np.triu_indices(n)
        a[iu] = self.packed
        a = a + np.triu(a, 1).T
        return a


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray     # ascending
    eigenvectors: np.ndarray    # orthonormal columns, matching order

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def _as_dense_symmetric(a) -> np.ndarray:
    if isinstance(a, SymmetricMatrix):
        return a.to_dense()
    a = np.asarray(a, dtype=np.float64)
    return 0.5 * (a + a.T)


def eigh(a, tols: Tolerances = DEFAULT_TOLS) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps the upper triangle row-major until the off-diagonal Frobenius
    norm drops below ``jacobi_offdiag`` times the matrix norm.
    """
    A = _as_dense_symmetric(a).copy()
    n = A.shape[0]
    if n < 1:
        raise ValueError("order must be >= 1")
    if not np.isfinite(A).all():
        raise ValueError("matrix has non-finite entries")
    V = np.eye(n)
    norm = np.linalg.norm(A)
    if norm == 0.0 or n == 1:
        order = np.argsort(np.diag(A), kind="stable")
        return EigenDecomposition(np.diag(A)[order], V[:, order])
    threshold = tols.jacobi_offdiag * norm
    for _ in range(tols.jacobi_max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-30 * norm:
                    continue
                # stable rotation angle: t = sign/( |tau| + sqrt(1+tau^2) )
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(tau) / (abs(tau) + np.hypot(1.0, tau)) if tau != 0 else 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                A[p, q] = 0.0
                A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    diag = np.diag(A).copy()
    order = np.argsort(diag, kind="stable")
    return EigenDecomposition(diag[order], V[:, order])


def psd_project(a, tols: Tolerances = DEFAULT_TOLS) -> np.ndarray:
    """Nearest (Frobenius) positive semidefinite matrix: clamp the spectrum
    at zero.  LAPACK-backed; this sits in the ADMM hot loop."""
    A = _as_dense_symmetric(a)
    w, v = np.linalg.eigh(A)
    if w[0] >= 0.0:
        return A
    w = np.clip(w, 0.0, None)
    out = (v * w) @ v.T
    return 0.5 * (out + out.T)


def max_rayleigh_perp_ones(g, tols: Tolerances = DEFAULT_TOLS) -> float:
    """max of x'Gx / x'x over x orthogonal to the all-ones vector: the top
    eigenvalue of PGP with P the centering projector.  Invariant under
    adding any multiple of the all-ones matrix to G."""
    G = _as_dense_symmetric(g)
    n = G.shape[0]
    if n == 1:
        return 0.0
    centered = G - G.mean(axis=0, keepdims=True)
    centered -= centered.mean(axis=1, keepdims=True)
    dec = eigh(centered, tols)
    return float(dec.eigenvalues[-1])


def nullspace_dimension(a, tol: float = DEFAULT_TOLS.nullspace) -> int:
    """Count of eigenvalues with |lambda| <= tol * max(1, lambda_max)."""
    dec = eigh(a)
    lam_max = float(dec.eigenvalues[-1])
    cut = tol * max(1.0, lam_max)
    return int((np.abs(dec.eigenvalues) <= cut).sum())
