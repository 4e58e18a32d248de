"""Planted ball instances, distances, clustering objectives, and the
brute-force partition oracle."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .serialize import to_canonical_json

DISTRIBUTIONS = ("uniform-ball", "uniform-sphere-scaled")


@dataclass(frozen=True)
class ClusteringAssignment:
    """A partition of the N points into k labeled clusters.

    ``labels[p]`` is the cluster index of point p.  ``medoids``, when
    present, gives one representative point index per cluster (k-median
    centers live on the data points themselves).
    """

    labels: np.ndarray
    k: int
    medoids: np.ndarray | None = None

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if self.k <= 0:
            raise ValueError("k must be positive")
        counts = np.bincount(labels, minlength=self.k)
        if labels.min(initial=0) < 0 or labels.max(initial=-1) >= self.k:
            raise ValueError("labels out of range")
        if (counts == 0).any():
            raise ValueError("every cluster must be nonempty")
        if self.medoids is not None:
            object.__setattr__(self, "medoids", np.asarray(self.medoids, dtype=np.int64))

    def clusters(self) -> list[np.ndarray]:
        """Point indices of each cluster, in label order."""
        return [np.flatnonzero(self.labels == a) for a in range(self.k)]

    def same_partition(self, other: "ClusteringAssignment") -> bool:
        """True when both label vectors induce the same partition."""
        if len(self.labels) != len(other.labels) or self.k != other.k:
            return False
        mine = {frozenset(c.tolist()) for c in self.clusters()}
        theirs = {frozenset(c.tolist()) for c in other.clusters()}
        return mine == theirs


@dataclass(frozen=True)
class ClusterInstance:
    """k planted clusters of n points each, sampled inside balls of the
    given radius around well-separated centers."""

    m: int
    k: int
    n: int
    radius: float
    centers: np.ndarray            # (k, m)
    points: np.ndarray             # (N, m), cluster-major order
    seed: int
    delta: float | None = None     # requested minimum center separation
    distribution: str = "uniform-ball"

    def __post_init__(self):
        for name in ("centers", "points"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.points.shape != (self.k * self.n, self.m):
            raise ValueError("points shape inconsistent with (k, n, m)")
        if self.centers.shape != (self.k, self.m):
            raise ValueError("centers shape inconsistent with (k, m)")

    @property
    def total_points(self) -> int:
        return self.k * self.n

    @property
    def labels(self) -> np.ndarray:
        return np.repeat(np.arange(self.k), self.n)

    def planted_assignment(self) -> ClusteringAssignment:
        return ClusteringAssignment(labels=self.labels, k=self.k)

    def min_center_separation(self) -> float:
        d = np.linalg.norm(self.centers[:, None, :] - self.centers[None, :, :], axis=2)
        off = d[~np.eye(self.k, dtype=bool)]
        return float(off.min()) if off.size else math.inf

    def validate(self) -> None:
        """Check the ball-membership and separation invariants."""
        offsets = self.points - np.repeat(self.centers, self.n, axis=0)
        norms = np.linalg.norm(offsets, axis=1)
        if (norms > self.radius).any():
            raise ValueError("point outside its planted ball")
        if self.delta is not None and self.k > 1:
            if self.min_center_separation() < self.delta - 1e-9:
                raise ValueError("center separation below requested delta")

    def to_json(self) -> str:
        pts = [
            {"a": int(p // self.n), "i": int(p % self.n), "x": list(self.points[p])}
            for p in range(self.total_points)
        ]
        obj = {
            "m": self.m,
            "k": self.k,
            "n": self.n,
            "radius": self.radius,
            "centers": [list(c) for c in self.centers],
            "points": pts,
            "seed": self.seed,
        }
        if self.delta is not None:
            obj["delta"] = self.delta
        obj["distribution"] = self.distribution
        return to_canonical_json(obj)

    @classmethod
    def from_json(cls, text: str) -> "ClusterInstance":
        obj = json.loads(text)
        k, n, m = int(obj["k"]), int(obj["n"]), int(obj["m"])
        points = np.zeros((k * n, m))
        for rec in obj["points"]:
            points[int(rec["a"]) * n + int(rec["i"])] = rec["x"]
        return cls(
            m=m,
            k=k,
            n=n,
            radius=float(obj["radius"]),
            centers=np.asarray(obj["centers"], dtype=np.float64),
            points=points,
            seed=int(obj["seed"]),
            delta=float(obj["delta"]) if "delta" in obj else None,
            distribution=obj.get("distribution", "uniform-ball"),
        )


@dataclass(frozen=True)
class SquaredDistanceMatrix:
    """The N x N matrix of squared Euclidean distances, with n x n block
    views indexed by cluster pair (points are stored cluster-major)."""

    values: np.ndarray
    n: int                      # points per cluster (equal-size blocks)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def block(self, a: int, b: int) -> np.ndarray:
        n = self.n
        return self.values[a * n:(a + 1) * n, b * n:(b + 1) * n]


def rng_for(seed: int, *subkeys: int) -> np.random.Generator:
    """Deterministic substream derived from (seed, subkeys...)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, subkeys)]))


def _simplex_centers(k: int, m: int, delta: float) -> np.ndarray:
    """k centers in R^m at pairwise distance exactly delta (needs k <= m+1).

    Scaled unit vectors of R^k are centered and expressed in the Helmert
    basis of the hyperplane orthogonal to the all-ones vector.
    """
    verts = np.eye(k) * (delta / math.sqrt(2.0))
    verts -= verts.mean(axis=0)
    basis = np.zeros((k - 1, k))
    for j in range(1, k):
        basis[j - 1, :j] = 1.0
        basis[j - 1, j] = -j
        basis[j - 1] /= math.sqrt(j * (j + 1))
    coords = verts @ basis.T
    centers = np.zeros((k, m))
    centers[:, : k - 1] = coords
    return centers


def _grid_centers(k: int, m: int, delta: float) -> np.ndarray:
    """k centers on an integer grid scaled by delta (any k; min distance delta)."""
    side = math.ceil(k ** (1.0 / m))
    pts = []
    for flat in range(side ** m):
        idx, rem = [], flat
        for _ in range(m):
            idx.append(rem % side)
            rem //= side
        pts.append(idx)
        if len(pts) == k:
            break
    return np.asarray(pts, dtype=np.float64) * delta


def place_centers(k: int, m: int, delta: float) -> np.ndarray:
    """Deterministic center layout with min pairwise distance >= delta
    (exactly delta when k <= m+1, via the regular simplex)."""
    if k == 1:
        return np.zeros((1, m))
    return _simplex_centers(k, m, delta) if k <= m + 1 else _grid_centers(k, m, delta)


def _ball_offsets(rng: np.random.Generator, count: int, m: int, radius: float,
                  distribution: str) -> np.ndarray:
    """Rotationally symmetric offsets inside the radius ball."""
    g = rng.standard_normal((count, m))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    dirs = g / norms
    u = rng.random(count)
    if distribution == "uniform-ball":
        r = radius * u ** (1.0 / m)
    elif distribution == "uniform-sphere-scaled":
        r = radius * u
    else:
        raise ValueError(f"unknown distribution {distribution!r}")
    offsets = dirs * r[:, None]
    big = np.linalg.norm(offsets, axis=1) > radius
    if big.any():
        offsets[big] *= radius / np.linalg.norm(offsets[big], axis=1, keepdims=True)
    return offsets


def sample_planted(m: int, k: int, n: int, delta: float, seed: int,
                   distribution: str = "uniform-ball",
                   centers: np.ndarray | None = None,
                   radius: float = 1.0) -> ClusterInstance:
    """Sample k clusters of n points each from balls around centers that are
    at least delta apart.  Offsets are drawn center-free from per-cluster
    substreams, so the sampled cloud is rotation-covariant with the centers.
    """
    if m < 1 or k < 1 or n < 1:
        raise ValueError("m, k, n must all be positive")
    if distribution not in DISTRIBUTIONS:
        raise ValueError(f"distribution must be one of {DISTRIBUTIONS}")
    if centers is None:
        if delta < 2 * radius:
            raise ValueError("delta must be at least 2*radius (disjoint balls)")
        centers = place_centers(k, m, delta)
    else:
        centers = np.asarray(centers, dtype=np.float64)
        if centers.shape != (k, m):
            raise ValueError("centers must have shape (k, m)")
    points = np.empty((k * n, m))
    for a in range(k):
        offs = _ball_offsets(rng_for(seed, a), n, m, radius, distribution)
        points[a * n:(a + 1) * n] = centers[a] + offs
    inst = ClusterInstance(m=m, k=k, n=n, radius=radius, centers=centers,
                           points=points, seed=int(seed), delta=float(delta),
                           distribution=distribution)
    inst.validate()
    return inst


def euclidean_distances(points: np.ndarray) -> np.ndarray:
    """Plain pairwise Euclidean distance matrix."""
    return np.sqrt(squared_distance_values(points))


def squared_distance_values(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    d2 = 0.5 * (d2 + d2.T)
    np.fill_diagonal(d2, 0.0)
    return d2


def squared_distances(instance: ClusterInstance) -> SquaredDistanceMatrix:
    """Squared-distance matrix of an instance, with n x n cluster blocks."""
    return SquaredDistanceMatrix(values=squared_distance_values(instance.points),
                                 n=instance.n)


def kmedian_cost(points: np.ndarray, assignment: ClusteringAssignment) -> float:
    """Sum over clusters of the distances to the best in-cluster medoid
    (or to the assignment's own medoids when it carries them)."""
    dist = euclidean_distances(np.asarray(points, dtype=np.float64))
    total = 0.0
    for a, members in enumerate(assignment.clusters()):
        sub = dist[np.ix_(members, members)]
        if assignment.medoids is not None:
            local = np.flatnonzero(members == assignment.medoids[a])
            if local.size != 1:
                raise ValueError("medoid not a member of its cluster")
            total += float(sub[local[0]].sum())
        else:
            total += float(sub.sum(axis=1).min())
    return total


def kmeans_cost(points: np.ndarray, assignment: ClusteringAssignment) -> float:
    """Within-cluster sum of squared distances to the centroid.

    Computed both via centroids and via the pairwise identity
    sum_i d^2(x_i, c) = (1/2|A|) sum_ij d^2(x_i, x_j); the two must agree.
    """
    pts = np.asarray(points, dtype=np.float64)
    d2 = squared_distance_values(pts)
    centroid_form = 0.0
    pairwise_form = 0.0
    for members in assignment.clusters():
        sub = pts[members]
        c = sub.mean(axis=0)
        centroid_form += float(((sub - c) ** 2).sum())
        pairwise_form += float(d2[np.ix_(members, members)].sum()) / (2.0 * len(members))
    if abs(centroid_form - pairwise_form) > 1e-10 * (1.0 + abs(centroid_form)):
        raise ArithmeticError("centroid and pairwise k-means costs disagree")
    return centroid_form


def kmeans_relaxation_cost(d2: np.ndarray, assignment: ClusteringAssignment) -> float:
    """The relaxation-side objective sum_t (1/|A_t|) sum_{p,q in A_t} d^2(p,q)
    (twice the centroid cost); this is what the LP/SDP objectives measure."""
    total = 0.0
    for members in assignment.clusters():
        total += float(d2[np.ix_(members, members)].sum()) / len(members)
    return total


def stirling2(n: int, k: int) -> int:
    """Number of partitions of an n-set into k nonempty parts."""
    row = [1] + [0] * k
    for _ in range(n):
        new = [0] * (k + 1)
        for j in range(1, k + 1):
            new[j] = row[j - 1] + j * row[j]
        row = new
        row[0] = 0
    return row[k]


def _partitions_into_k(n: int, k: int):
    """Yield label vectors (restricted growth strings) with exactly k parts."""
    labels = [0] * n

    def rec(i: int, used: int):
        if i == n:
            if used == k:
                yield labels.copy()
            return
        if used + (n - i) < k:
            return
        for lab in range(min(used + 1, k)):
            labels[i] = lab
            yield from rec(i + 1, used + (1 if lab == used else 0))

    yield from rec(1, 1)


def brute_force_optimum(points: np.ndarray, k: int, objective: str
                        ) -> tuple[ClusteringAssignment, float]:
    """Exhaustively optimal partition by enumerating all k-part set
    partitions (with exhaustive medoid choice for k-median)."""
    if objective not in ("kmedian", "kmeans"):
        raise ValueError("objective must be 'kmedian' or 'kmeans'")
    pts = np.asarray(points, dtype=np.float64)
    n_points = len(pts)
    count = stirling2(n_points, k)
    if count > 10 ** 6:
        raise ValueError(f"{count} partitions exceed the enumeration cap")
    d2 = squared_distance_values(pts)
    dist = np.sqrt(d2)
    best_cost = math.inf
    best_labels = None
    for labels in _partitions_into_k(n_points, k):
        lab = np.asarray(labels)
        cost = 0.0
        for a in range(k):
            members = np.flatnonzero(lab == a)
            if objective == "kmedian":
                cost += dist[np.ix_(members, members)].sum(axis=1).min()
            else:
                cost += d2[np.ix_(members, members)].sum() / (2.0 * len(members))
        if cost < best_cost:
            best_cost = cost
            best_labels = lab
    assignment = ClusteringAssignment(labels=best_labels, k=k)
    return assignment, float(best_cost)
