"""Greedy k-center, k-means++ seeding, and Lloyd k-means.

All routines are deterministic given their generator/seed and break ties by
the lowest index, so selections can be regression-tested exactly against
naive reference implementations.
"""

from __future__ import annotations

import numpy as np

from .seeding import rng


def squared_distances(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Row-wise squared euclidean distance to a single center."""
    diff = points - center
    return np.einsum("ij,ij->i", diff, diff)


def kmeans_pp_indices(points: np.ndarray, k: int, gen: np.random.Generator) -> list[int]:
    """k-means++ seeding: first index uniform, then proportional to squared
    distance from the nearest chosen center.

    Points identical to a chosen center have zero mass and are never picked
    again (unless every remaining point has zero mass, in which case the
    draw falls back to uniform over unchosen points).
    """
    n = points.shape[0]
    if not 0 < k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    chosen = [int(gen.integers(n))]
    d2 = squared_distances(points, points[chosen[0]])
    while len(chosen) < k:
        mass = d2.sum()
        if mass > 0.0:
            idx = int(gen.choice(n, p=d2 / mass))
        else:
            pool = np.setdiff1d(np.arange(n), np.array(chosen))
            idx = int(gen.choice(pool))
        chosen.append(idx)
        d2 = np.minimum(d2, squared_distances(points, points[idx]))
    return chosen


def kmeans(points: np.ndarray, k: int, seed: int, iters: int = 100,
           ) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with k-means++ initialization.

    Runs until the assignment reaches a fixpoint or ``iters`` passes; an
    empty cluster is reseeded to the point farthest from its nearest center.
    Returns (assignments, centers).
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points {n}")
    gen = rng(seed, "kmeans")
    centers = points[kmeans_pp_indices(points, k, gen)].copy()
    assignments = np.full(n, -1, dtype=np.int64)

    for _ in range(iters):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = d2.argmin(axis=1)
        occupied = np.zeros(k, dtype=bool)
        occupied[new_assign] = True
        for j in range(k):
            if occupied[j]:
                centers[j] = points[new_assign == j].mean(axis=0)
        for j in range(k):
            if not occupied[j]:
                valid = occupied.copy()
                valid[j] = False
                near = ((points[:, None, :] - centers[None, valid, :]) ** 2).sum(axis=2).min(axis=1)
                far = int(near.argmax())
                centers[j] = points[far]
                new_assign[far] = j
                occupied[j] = True
        if np.array_equal(new_assign, assignments):
            break
        assignments = new_assign
    return assignments, centers


def inertia(points: np.ndarray, assignments: np.ndarray, centers: np.ndarray) -> float:
    return float(((points - centers[assignments]) ** 2).sum())
