"""Exact kd-tree and randomized kd-tree forest for nearest-neighbor search.

Trees split on the dimension of maximum variance at the lower median;
points equal to the split value go right.  The forest variant picks the
split dimension uniformly among the `top_r` highest-variance dimensions
(seeded), and queries run best-bin-first over one priority queue shared
by all trees with a budget of leaf-point evaluations.  Distance bounds
accumulate per-dimension offsets, so the exact search prunes correctly
even when ancestors split the same dimension twice.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import UsageError


class _Leaf:
    __slots__ = ("indices", "pts")

    def __init__(self, indices: np.ndarray, pts: np.ndarray):
        self.indices = indices
        self.pts = pts


class _Node:
    __slots__ = ("dim", "value", "left", "right")

    def __init__(self, dim: int, value: float, left, right):
        self.dim = dim
        self.value = value
        self.left = left
        self.right = right


@dataclass(frozen=True)
class KdTree:
    points: np.ndarray  # (n, d) float64
    root: object
    bucket_size: int


@dataclass(frozen=True)
class KdForest:
    points: np.ndarray
    trees: tuple[KdTree, ...]
    top_r: int
    rng_seed: int


@dataclass(frozen=True)
class NeighborQueryResult:
    indices: np.ndarray   # (k,) int64
    distances: np.ndarray  # (k,) float64, ascending


def _build(points: np.ndarray, indices: np.ndarray, bucket_size: int, rng, top_r: int):
    pts = points[indices]
    if len(indices) <= bucket_size:
        return _Leaf(indices, pts)
    var = pts.var(axis=0)
    if rng is None:
        dim = int(np.argmax(var))
    else:
        ranked = np.argsort(-var, kind="stable")
        dim = int(ranked[rng.integers(0, min(top_r, points.shape[1]))])
    col = pts[:, dim]
    mid = (len(col) - 1) // 2
    value = float(np.partition(col, mid)[mid])  # lower median
    left_mask = col < value
    if not left_mask.any() or left_mask.all():
        return _Leaf(indices, pts)  # all values tied on every useful split
    return _Node(
        dim, value,
        _build(points, indices[left_mask], bucket_size, rng, top_r),
        _build(points, indices[~left_mask], bucket_size, rng, top_r),
    )


def build_exact(points: np.ndarray, bucket_size: int = 16) -> KdTree:
    """Deterministic kd-tree splitting on the max-variance dimension."""
    points = np.asarray(points, dtype=np.float64)
    if len(points) == 0:
        raise UsageError("cannot build a tree over zero points")
    root = _build(points, np.arange(len(points)), bucket_size, None, 0)
    return KdTree(points=points, root=root, bucket_size=bucket_size)


def build_forest(points: np.ndarray, trees: int = 4, top_r: int = 2,
                 rng_seed: int = 0, bucket_size: int = 16) -> KdForest:
    """Forest of kd-trees with independent seeded random split choices."""
    points = np.asarray(points, dtype=np.float64)
    if len(points) == 0:
        raise UsageError("cannot build a forest over zero points")
    if trees < 1:
        raise UsageError(f"forest needs >= 1 tree, got {trees}")
    seeds = np.random.SeedSequence(rng_seed).spawn(trees)
    built = tuple(
        KdTree(points=points,
               root=_build(points, np.arange(len(points)), bucket_size,
                           np.random.default_rng(seeds[t]), top_r),
               bucket_size=bucket_size)
        for t in range(trees))
    return KdForest(points=points, trees=built, top_r=top_r, rng_seed=rng_seed)


class _KBest:
    """Fixed-size candidate set ordered by (distance^2, index)."""

    __slots__ = ("k", "heap")

    def __init__(self, k: int):
        self.k = k
        self.heap: list[tuple[float, int]] = []  # max-heap via (-d2, -idx)

    def offer_leaf(self, leaf: _Leaf, query: np.ndarray):
        diff = leaf.pts - query
        d2s = np.einsum("ij,ij->i", diff, diff)
        for d2, idx in zip(d2s, leaf.indices):
            entry = (-d2, -idx)
            if len(self.heap) < self.k:
                heapq.heappush(self.heap, entry)
            elif entry > self.heap[0]:
                heapq.heapreplace(self.heap, entry)

    def worst_d2(self) -> float:
        if len(self.heap) < self.k:
            return np.inf
        return -self.heap[0][0]

    def result(self) -> NeighborQueryResult:
        ordered = sorted((-d2, -idx) for d2, idx in self.heap)
        return NeighborQueryResult(
            indices=np.array([idx for _, idx in ordered], dtype=np.int64),
            distances=np.sqrt(np.array([d2 for d2, _ in ordered])),
        )


def _descend(node, query, bound, offsets, heap, counter, tree_tag):
    """Walk to the query leaf, queueing far branches with tight bounds."""
    while isinstance(node, _Node):
        delta = query[node.dim] - node.value
        if delta < 0:
            near, far, far_off = node.left, node.right, -delta
        else:
            near, far, far_off = node.right, node.left, delta
        old = offsets[node.dim]
        far_bound = bound - old * old + far_off * far_off
        far_offsets = offsets.copy()
        far_offsets[node.dim] = far_off
        heapq.heappush(heap, (far_bound, next(counter), tree_tag, far, far_offsets))
        node = near
    return node


def knn_exact(tree: KdTree, query: np.ndarray, k: int) -> NeighborQueryResult:
    """True k nearest neighbors by backtracking search; ties go to lower index."""
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    if k > len(tree.points):
        raise UsageError(f"k={k} exceeds point count {len(tree.points)}")
    query = np.asarray(query, dtype=np.float64)
    counter = itertools.count()
    best = _KBest(k)
    heap: list = []
    dim = tree.points.shape[1]
    leaf = _descend(tree.root, query, 0.0, np.zeros(dim), heap, counter, 0)
    best.offer_leaf(leaf, query)
    while heap:
        bound, _, _, node, offsets = heapq.heappop(heap)
        if bound > best.worst_d2():
            break
        leaf = _descend(node, query, bound, offsets, heap, counter, 0)
        best.offer_leaf(leaf, query)
    return best.result()


def knn_approx(forest: KdForest, query: np.ndarray, k: int,
               max_checks: int) -> NeighborQueryResult:
    """Best-bin-first over all trees, stopping after max_checks point evaluations.

    Each distinct point is evaluated and counted at most once, so a
    budget of the full point count degrades gracefully to the exact
    answer.
    """
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    if max_checks < k:
        raise UsageError(f"max_checks {max_checks} < k {k}")
    query = np.asarray(query, dtype=np.float64)
    n, dim = forest.points.shape
    k = min(k, n)
    counter = itertools.count()
    visited = np.zeros(n, dtype=bool)
    best = _KBest(k)
    heap: list = []
    checks = 0

    def offer(leaf: _Leaf) -> int:
        fresh = ~visited[leaf.indices]
        if not fresh.any():
            return 0
        indices = leaf.indices[fresh]
        visited[indices] = True
        best.offer_leaf(_Leaf(indices, leaf.pts[fresh]), query)
        return len(indices)

    for t, tree in enumerate(forest.trees):
        leaf = _descend(tree.root, query, 0.0, np.zeros(dim), heap, counter, t)
        checks += offer(leaf)
        if checks >= max_checks:
            return best.result()
    while heap and checks < max_checks:
        bound, _, t, node, offsets = heapq.heappop(heap)
        if bound > best.worst_d2():
            break  # heap is bound-ordered: nothing left can improve the result
        leaf = _descend(node, query, bound, offsets, heap, counter, t)
        checks += offer(leaf)
    return best.result()


def average_nn_distance(points: np.ndarray) -> float:
    """Mean distance from each point to its nearest distinct-index point.

    Coincident duplicates therefore contribute 0.  Uses the exact tree:
    this value sets the interpolation radius, so correctness beats speed.
    """
    points = np.asarray(points, dtype=np.float64)
    if len(points) < 2:
        raise UsageError("average_nn_distance needs at least 2 points")
    tree = build_exact(points)
    total = 0.0
    for i in range(len(points)):
        result = knn_exact(tree, points[i], 2)
        if result.indices[0] != i:
            total += result.distances[0]  # a duplicate of i at distance 0
        else:
            total += result.distances[1]
    return total / len(points)
