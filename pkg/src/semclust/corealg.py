"""Shared dense numerics: similarity, k-means, exact nearest neighbors.

All routines are deterministic given their seed and run in float64
internally regardless of the float32 storage type.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .embedstore import EmbeddingMatrix
from .errors import DimensionMismatch, KTooLarge, TooFewPoints

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 300
DEFAULT_RESTARTS = 10


@dataclass(frozen=True)
class KMeansResult:
    centers: EmbeddingMatrix          # c x d, not generally unit-norm
    assignment: np.ndarray            # n center indices
    inertia: float                    # sum of squared distances
    iterations: int

    @property
    def c(self) -> int:
        return self.centers.n


@dataclass(frozen=True)
class NeighborGraph:
    """Exact k nearest neighbors per row by dot-product similarity."""

    k: int
    indices: np.ndarray               # n x k, self excluded, descending sim

    @property
    def n(self) -> int:
        return self.indices.shape[0]


def dot_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionMismatch(f"shapes {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DimensionMismatch("non-finite entries")
    return float(a @ b)


def _kmeanspp_init(x: np.ndarray, c: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding; falls back to lowest unchosen index when every
    remaining candidate is at distance zero (duplicate-heavy inputs)."""
    n = x.shape[0]
    chosen = np.empty(c, dtype=np.int64)
    chosen[0] = rng.integers(n)
    d2 = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    for j in range(1, c):
        total = d2.sum()
        if total <= 0.0:
            mask = np.ones(n, dtype=bool)
            mask[chosen[:j]] = False
            chosen[j] = int(np.argmax(mask))
        else:
            chosen[j] = rng.choice(n, p=d2 / total)
        d2 = np.minimum(d2, np.sum((x - x[chosen[j]]) ** 2, axis=1))
    return x[chosen].copy()


def _assign(x: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = cdist(x, centers, metric="sqeuclidean")
    assign = np.argmin(d2, axis=1)          # ties -> lower index
    return assign, d2


def _repair_empty(
    x: np.ndarray, centers: np.ndarray, assign: np.ndarray, d2: np.ndarray
) -> None:
    """Give each empty cluster the point currently farthest from its center."""
    c = centers.shape[0]
    counts = np.bincount(assign, minlength=c)
    taken: set[int] = set()
    for l in np.flatnonzero(counts == 0):
        dist_own = d2[np.arange(len(assign)), assign].copy()
        for t in taken:
            dist_own[t] = -np.inf
        # never steal the last member of another cluster
        for j in np.argsort(-dist_own, kind="stable"):
            if counts[assign[j]] > 1:
                break
        counts[assign[j]] -= 1
        assign[j] = l
        counts[l] = 1
        centers[l] = x[j]
        taken.add(int(j))


def _lloyd(
    x: np.ndarray, c: int, rng: np.random.Generator, max_iter: int, tol: float
) -> tuple[np.ndarray, np.ndarray, float, int]:
    centers = _kmeanspp_init(x, c, rng)
    prev_inertia = np.inf
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        assign, d2 = _assign(x, centers)
        _repair_empty(x, centers, assign, d2)
        inertia = float(np.sum((x - centers[assign]) ** 2))
        if __debug__:
            assert inertia <= prev_inertia + 1e-9 * max(1.0, prev_inertia)
        prev_inertia = inertia
        new_centers = np.empty_like(centers)
        for l in range(c):
            new_centers[l] = x[assign == l].mean(axis=0)
        shift = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if shift < tol:
            break
    return centers, assign, prev_inertia, iterations


def kmeans(
    points: EmbeddingMatrix,
    c: int,
    seed: int,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    restarts: int = DEFAULT_RESTARTS,
) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding; best of `restarts` runs.

    The returned assignment is recomputed against the float32-rounded
    centers so that assignment, centers and inertia are self-consistent.
    """
    if c > points.n:
        raise TooFewPoints(f"c={c} exceeds n={points.n}")
    if c < 1 or max_iter < 1 or restarts < 1:
        raise TooFewPoints("c, max_iter and restarts must be >= 1")
    x = points.as_f64()
    best = None
    for ss in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.Generator(np.random.PCG64(ss))
        centers, _, inertia, iterations = _lloyd(x, c, rng, max_iter, tol)
        if best is None or inertia < best[1]:
            best = (centers, inertia, iterations)
    centers_f32 = best[0].astype(np.float32)
    centers64 = centers_f32.astype(np.float64)
    assign, d2 = _assign(x, centers64)
    _repair_empty(x, centers64, assign, d2)
    centers_f32 = centers64.astype(np.float32)
    inertia = float(np.sum((x - centers64[assign]) ** 2))
    return KMeansResult(
        centers=EmbeddingMatrix(centers_f32),
        assignment=assign,
        inertia=inertia,
        iterations=best[2],
    )


def similarity_matrix(a: np.ndarray, b: np.ndarray, block: int = 2048) -> np.ndarray:
    """Dense a @ b.T in float64, computed in row blocks to bound memory."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.float64)
    for start in range(0, a.shape[0], block):
        stop = min(start + block, a.shape[0])
        out[start:stop] = a[start:stop] @ b.T
    return out


def knn_graph(points: EmbeddingMatrix, k: int) -> NeighborGraph:
    """Exact top-k rows by dot product, self excluded, ties to lower index."""
    n = points.n
    if not 1 <= k <= n - 1:
        raise KTooLarge(f"k={k} outside [1, {n - 1}]")
    x = points.as_f64()
    indices = np.empty((n, k), dtype=np.int64)
    block = max(1, min(n, (1 << 22) // max(1, n)))
    for start in range(0, n, block):
        stop = min(start + block, n)
        sims = x[start:stop] @ x.T
        sims[np.arange(stop - start), np.arange(start, stop)] = -np.inf
        # stable sort on -sim: descending similarity, ties to lower index
        order = np.argsort(-sims, axis=1, kind="stable")
        indices[start:stop] = order[:, :k]
    return NeighborGraph(k=k, indices=indices)


def max_in_degree(g: NeighborGraph) -> int:
    """k' = the largest number of rows that list any one node as a neighbor."""
    counts = np.bincount(g.indices.ravel(), minlength=g.n)
    return int(counts.max())
