"""Clustering and evaluation utilities: k-means with elbow selection,
silhouette, adjusted Rand index, and map cell coloring.

All of these are deliberately self-contained numpy implementations so every
run is deterministic under an explicit seed; the test suite cross-checks them
against scikit-learn.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .gridmap import GridMap
from .validation import as_matrix, check_fitted

__all__ = [
    "Clustering",
    "KMeans",
    "kmeans",
    "elbow_k",
    "silhouette",
    "ari",
    "color_cells",
]


@dataclass(frozen=True)
class Clustering:
    """A k-means result: per-item labels plus centroids and the final WCSS."""

    labels: dict
    k: int
    centroids: np.ndarray
    wcss: float
    wcss_history: tuple[float, ...]
    label_array: np.ndarray


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, k) squared Euclidean distances
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _plusplus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = [int(rng.integers(n))]
    d2 = np.sum((points - points[centers[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))  # all remaining points coincide with a center
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(idx)
        d2 = np.minimum(d2, np.sum((points - points[idx]) ** 2, axis=1))
    return points[centers].copy()


def kmeans(points, k: int, seed: int = 0, max_iters: int = 100, ids: Sequence | None = None) -> Clustering:
    """Lloyd's algorithm with seeded k-means++ initialization.

    Runs until the assignment reaches a fixpoint or max_iters. Empty clusters
    are re-seeded with the point currently farthest from its centroid, which
    keeps the per-iteration WCSS non-increasing. Deterministic given seed.
    """
    pts = as_matrix(points, "points")
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if ids is None:
        ids = list(range(n))
    elif len(ids) != n:
        raise ValueError(f"got {len(ids)} ids for {n} points")
    rng = np.random.default_rng(seed)
    centroids = _plusplus_init(pts, k, rng)
    labels = np.full(n, -1, dtype=np.intp)
    history = []
    for _ in range(max_iters):
        d2 = _sq_dists(pts, centroids)
        new_labels = d2.argmin(axis=1)
        point_d2 = d2[np.arange(n), new_labels]
        for c in range(k):
            if not np.any(new_labels == c):
                # steal only from clusters with >= 2 members so no cluster is
                # emptied again; one such cluster always exists (k <= n)
                counts = np.bincount(new_labels, minlength=k)
                eligible = np.flatnonzero(counts[new_labels] > 1)
                far = int(eligible[point_d2[eligible].argmax()])
                centroids[c] = pts[far]
                new_labels[far] = c
                point_d2[far] = 0.0
        history.append(float(point_d2.sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            centroids[c] = pts[labels == c].mean(axis=0)
    d2 = _sq_dists(pts, centroids)
    wcss = float(d2[np.arange(n), labels].sum())
    history.append(wcss)
    return Clustering(
        labels={ids[i]: int(labels[i]) for i in range(n)},
        k=k,
        centroids=centroids,
        wcss=wcss,
        wcss_history=tuple(history),
        label_array=labels.copy(),
    )


def elbow_k(points, k_max: int, seed: int = 0) -> int:
    """Cluster count at the knee of the WCSS curve.

    Fits k = 1..k_max and returns the k whose (k, WCSS) point lies farthest
    from the chord joining the curve's endpoints. Endpoints only win when
    k_max <= 2 (they sit on the chord); ties break toward the smallest k.
    """
    pts = as_matrix(points, "points")
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    k_max = min(k_max, pts.shape[0])
    if k_max == 1:
        return 1
    wcss = np.array([kmeans(pts, k, seed=seed).wcss for k in range(1, k_max + 1)])
    ks = np.arange(1, k_max + 1, dtype=np.float64)
    dx, dy = k_max - 1.0, wcss[-1] - wcss[0]
    dist = np.abs(dy * (ks - 1.0) - dx * (wcss - wcss[0])) / np.hypot(dx, dy)
    candidates = np.arange(1, k_max - 1) if k_max >= 3 else np.arange(k_max)
    best = candidates[int(np.argmax(dist[candidates]))]  # first max: smallest k
    return int(best) + 1


def silhouette(points, labels) -> float:
    """Mean silhouette coefficient; singletons contribute 0, as does b = a = 0."""
    pts = as_matrix(points, "points")
    lab = np.asarray(labels)
    n = pts.shape[0]
    if lab.shape != (n,):
        raise ValueError(f"labels shape {lab.shape} does not match {n} points")
    uniq, inv = np.unique(lab, return_inverse=True)
    if len(uniq) < 2:
        raise ValueError("silhouette needs at least 2 distinct labels")
    d2 = _sq_dists(pts, pts)
    np.maximum(d2, 0.0, out=d2)
    dist = np.sqrt(d2)
    sizes = np.bincount(inv)
    # per-point mean distance to each cluster
    sums = np.zeros((n, len(uniq)))
    for c in range(len(uniq)):
        sums[:, c] = dist[:, inv == c].sum(axis=1)
    scores = np.zeros(n)
    for i in range(n):
        c = inv[i]
        if sizes[c] == 1:
            continue
        a = sums[i, c] / (sizes[c] - 1)
        b = np.inf
        for other in range(len(uniq)):
            if other != c:
                b = min(b, sums[i, other] / sizes[other])
        top = max(a, b)
        if top > 0:
            scores[i] = (b - a) / top
    return float(scores.mean())


def ari(labels_a, labels_b) -> float:
    """Adjusted Rand index between two labelings of the same items."""
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.shape != b.shape or a.size == 0:
        raise ValueError("labelings must be non-empty and the same length")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    contingency = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(contingency, (ia, ib), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    index = comb2(contingency).sum()
    sum_a = comb2(contingency.sum(axis=1)).sum()
    sum_b = comb2(contingency.sum(axis=0)).sum()
    expected = sum_a * sum_b / comb2(a.size)
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def color_cells(grid: GridMap, labels: Mapping) -> dict[int, int]:
    """Assign a color id to every grid cell.

    Occupied cells take their occupant's cluster color. Vacant cells are
    resolved nearest-to-occupied first: each takes the majority color of its
    8 nearest already-colored cells; ties defer to the color of the single
    nearest occupied cell, and any remaining tie picks the lowest color id.
    """
    occupied = [i for i, occ in enumerate(grid.occupants) if occ is not None]
    if not occupied:
        raise ValueError("map has no occupants to derive colors from")
    colors: dict[int, int] = {}
    for i in occupied:
        occ = grid.occupants[i]
        if occ not in labels:
            raise KeyError(f"no cluster label for occupant {occ!r}")
        colors[i] = int(labels[occ])

    occ_pos = grid.positions[occupied]
    vacant = [i for i in range(grid.n_cells) if i not in colors]
    if not vacant:
        return colors
    vac_pos = grid.positions[vacant]
    d_occ = np.sqrt(((vac_pos[:, None, :] - occ_pos[None, :, :]) ** 2).sum(axis=2))
    nearest_occ_dist = d_occ.min(axis=1)
    order = np.lexsort((np.asarray(vacant), nearest_occ_dist))

    colored_idx = list(occupied)
    for pos in order:
        cell = vacant[pos]
        ref = np.asarray(colored_idx)
        dists = np.linalg.norm(grid.positions[ref] - grid.positions[cell], axis=1)
        take = ref[np.lexsort((ref, dists))][:8]
        counts = Counter(colors[int(i)] for i in take)
        top_count = max(counts.values())
        tied = sorted(c for c, cnt in counts.items() if cnt == top_count)
        if len(tied) == 1:
            colors[cell] = tied[0]
        else:
            row = d_occ[pos]
            near = row.min()
            near_colors = {colors[occupied[j]] for j in np.flatnonzero(row == near)}
            colors[cell] = min(near_colors) if len(near_colors) == 1 else min(tied)
        colored_idx.append(cell)
    return colors


class KMeans(BaseEstimator):
    """Estimator wrapper over kmeans(); deterministic given seed."""

    def __init__(self, n_clusters: int = 8, seed: int = 0, max_iters: int = 100):
        self.n_clusters = n_clusters
        self.seed = seed
        self.max_iters = max_iters

    def fit(self, X, ids: Sequence | None = None):
        result = kmeans(X, self.n_clusters, seed=self.seed, max_iters=self.max_iters, ids=ids)
        self.clustering_ = result
        self.labels_ = result.label_array
        self.centroids_ = result.centroids
        self.wcss_ = result.wcss
        return self

    def predict(self, X) -> np.ndarray:
        check_fitted(self, "centroids_")
        pts = as_matrix(X, "X")
        return _sq_dists(pts, self.centroids_).argmin(axis=1)
