"""Convex relaxations of geometric clustering: k-median LP, k-means LP,
k-means SDP, their exact-recovery dual certificates, competing heuristics,
and phase-diagram experiments on planted ball instances."""

__version__ = "0.1.0"
