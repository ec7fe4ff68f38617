"""Seeded k-means: k-means++ seeding, Lloyd's iterations, Hartigan refinement."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .embedding import unit_vector


@dataclass
class KMeansResult:
    assignments: np.ndarray
    centroids: list[np.ndarray]
    means: np.ndarray
    inertia: float
    iterations: int
    inertia_history: list[float] = field(default_factory=list)

    def groups(self) -> list[list[int]]:
        """Point indices per cluster, clusters ordered by smallest member."""
        k = self.means.shape[0]
        groups = [np.flatnonzero(self.assignments == j).tolist() for j in range(k)]
        return sorted((g for g in groups if g), key=lambda g: g[0])


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = [points[rng.integers(n)]]
    for _ in range(1, k):
        d2 = _sq_dists(points, np.array(centers)).min(axis=1)
        total = d2.sum()
        if total <= 0.0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers.append(points[idx])
    return np.array(centers, dtype=np.float64)


def _repair_empty(points, centers, assign, d2):
    """Give each empty cluster the point farthest from its current center."""
    k = centers.shape[0]
    for j in range(k):
        counts = np.bincount(assign, minlength=k)
        if counts[j]:
            continue
        own = d2[np.arange(len(points)), assign]
        movable = counts[assign] > 1
        if not movable.any():
            continue
        own = np.where(movable, own, -np.inf)
        far = int(np.argmax(own))
        assign[far] = j
        centers[j] = points[far]
    return assign


def _means(points, assign, k, previous):
    means = previous.copy()
    for j in range(k):
        members = points[assign == j]
        if len(members):
            means[j] = members.mean(axis=0)
    return means


def _inertia(points, assign, means) -> float:
    diff = points - means[assign]
    return float(np.einsum("ij,ij->", diff, diff))


def _hartigan(points, assign, k, max_passes=100):
    """Single-point transfers that strictly lower inertia.

    Moving x from A to B changes the cost by
    ``|B|/(|B|+1) |x-mu_B|^2 - |A|/(|A|-1) |x-mu_A|^2``; Lloyd's fixed points
    where some such move is negative are escaped here.
    """
    assign = assign.copy()
    counts = np.bincount(assign, minlength=k).astype(float)
    sums = np.zeros((k, points.shape[1]))
    np.add.at(sums, assign, points)
    for _ in range(max_passes):
        moved = False
        for i, x in enumerate(points):
            a = assign[i]
            if counts[a] <= 1:
                continue
            means = sums / np.maximum(counts, 1)[:, None]
            d2 = ((means - x) ** 2).sum(axis=1)
            gain_out = counts[a] / (counts[a] - 1) * d2[a]
            cost_in = counts / (counts + 1) * d2
            cost_in[a] = np.inf
            b = int(np.argmin(cost_in))
            if cost_in[b] < gain_out - 1e-12:
                assign[i] = b
                counts[a] -= 1
                counts[b] += 1
                sums[a] -= x
                sums[b] += x
                moved = True
        if not moved:
            break
    return assign


def _lloyd(points, centers, max_iter, tol):
    k = centers.shape[0]
    history = []
    assign = np.zeros(len(points), dtype=int)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        d2 = _sq_dists(points, centers)
        assign = np.argmin(d2, axis=1)
        assign = _repair_empty(points, centers, assign, d2)
        means = _means(points, assign, k, centers)
        history.append(_inertia(points, assign, means))
        shift = float(np.max(np.linalg.norm(means - centers, axis=1)))
        centers = means
        if shift < tol:
            break
    return assign, centers, history, iterations


def _seedings(points, k, rng, n_restarts, seed_budget):
    n = len(points)
    if math.comb(n, k) <= seed_budget:
        # small inputs: start once from every k-subset of the points
        for subset in itertools.combinations(range(n), k):
            yield points[list(subset)].copy()
        return
    for _ in range(max(1, n_restarts)):
        yield _plusplus(points, k, rng)


def kmeans(embeddings, k: int, seed=0, n_restarts: int = 8, max_iter: int = 100, tol: float = 1e-6,
           seed_budget: int = 256) -> KMeansResult:
    """Partition ``embeddings`` into ``k`` groups minimizing squared distance.

    Each restart runs Lloyd's iterations until no center moves by ``tol`` or
    ``max_iter`` is reached, then polishes the partition with single-point
    transfers. When there are at most ``seed_budget`` ways to pick ``k``
    points, every such pick is used as a starting point; otherwise
    ``n_restarts`` k-means++ seedings are drawn. The run with the lowest
    inertia wins (ties go to the earlier run). ``seed`` may be anything
    accepted by ``numpy.random.default_rng``.
    """
    points = np.asarray(embeddings, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise ValueError("kmeans needs a non-empty 2-D array of points")
    if not 1 <= k <= len(points):
        raise ValueError(f"k must lie in [1, {len(points)}], got {k}")
    rng = np.random.default_rng(seed)
    best = None
    for centers in _seedings(points, k, rng, n_restarts, seed_budget):
        assign, means, history, iterations = _lloyd(points, centers, max_iter, tol)
        refined = _hartigan(points, assign, k)
        if not np.array_equal(refined, assign):
            assign = refined
            means = _means(points, assign, k, means)
        inertia = _inertia(points, assign, means)
        if best is None or inertia < best[2] - 1e-12:
            best = (assign, means, inertia, iterations, history)
    assign, means, inertia, iterations, history = best
    centroids = []
    for j in range(k):
        norm = float(np.linalg.norm(means[j]))
        # degenerate input (all-zero members) keeps the raw mean
        centroids.append(unit_vector(means[j]) if norm > 0 and np.isfinite(norm) else means[j].copy())
    return KMeansResult(assign.copy(), centroids, means, inertia, iterations, history)
