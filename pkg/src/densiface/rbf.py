"""Gaussian radial-basis-function densification of the facial cloud.

The seed cloud is treated as a height field z(x, y).  A Gaussian kernel
with radius R0 = r0_multiplier * (average seed spacing) is centered on
every seed; the weight vector solves (Phi + ridge*I) W = Z where Phi
holds kernel values for seed pairs closer than cutoff_multiplier * R0
(farther pairs are treated as 0).  The fitted model is evaluated on a
dense grid over the seeds' footprint and the union of seeds and grid
points is returned, colored from each point's nearest seeds.

Solver backends:

* ``truncated_cholesky`` (default) - dense Cholesky factorization of the
  truncated system.  With the default cutoff the truncated kernel is
  positive definite with margin, and LAPACK solves the 10^4-size systems
  of real frames in seconds with residuals far below cg_rel_tol.
* ``sparse_cg`` - plain conjugate gradient on the truncated system in
  CSR form, to cg_rel_tol relative residual.
* ``dense_exact`` - LU elimination of the full untruncated system,
  allowed up to M = 2000; the small-instance oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import SolverError, UsageError
from .geometry import PointCloud
from .neighbors import KdTree, _Leaf, _Node, average_nn_distance, build_exact, knn_exact

DENSE_EXACT_LIMIT = 2000


@dataclass(frozen=True)
class RbfConfig:
    r0_multiplier: float = 6.0
    cutoff_multiplier: float = 5.0
    ridge: float = 1e-6
    upsample: int = 3
    mask_multiplier: float = 4.0
    color_k: int = 8
    solver: str = "truncated_cholesky"
    cg_rel_tol: float = 1e-8
    cg_max_iters: Optional[int] = None  # defaults to 10 * M

    def __post_init__(self):
        for name in ("r0_multiplier", "cutoff_multiplier", "mask_multiplier"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be > 0")
        if self.ridge < 0:
            raise UsageError("ridge must be >= 0")
        if self.upsample < 1:
            raise UsageError("upsample must be >= 1")
        if self.color_k < 1:
            raise UsageError("color_k must be >= 1")
        if self.solver not in ("truncated_cholesky", "sparse_cg", "dense_exact"):
            raise UsageError(f"unknown solver {self.solver!r}")
        if not self.cg_rel_tol > 0:
            raise UsageError("cg_rel_tol must be > 0")


@dataclass(frozen=True)
class RbfModel:
    centers: np.ndarray  # (M, 2) seed (x, y)
    values: np.ndarray   # (M,) seed z
    weights: np.ndarray  # (M,)
    r0: float


@dataclass(frozen=True)
class DenseGrid:
    origin: tuple[float, float]
    spacing: float
    nx: int
    ny: int
    mask: np.ndarray  # (ny, nx) bool

    def cell_xy(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.origin[0] + self.spacing * np.arange(self.nx)
        ys = self.origin[1] + self.spacing * np.arange(self.ny)
        return np.meshgrid(xs, ys)


def gaussian_kernel(r, r0: float):
    """exp(-r^2 / r0^2) for r >= 0; vanishes to ~2.3e-16 by r = 6 r0."""
    if not r0 > 0:
        raise UsageError(f"r0 must be > 0, got {r0}")
    r = np.asarray(r, dtype=np.float64)
    out = np.exp(-(r * r) / (r0 * r0))
    return float(out) if out.ndim == 0 else out


def _bin_points(xy: np.ndarray, cell: float) -> dict[tuple[int, int], np.ndarray]:
    bx = np.floor(xy[:, 0] / cell).astype(np.int64)
    by = np.floor(xy[:, 1] / cell).astype(np.int64)
    order = np.lexsort((by, bx))
    sbx, sby = bx[order], by[order]
    change = np.r_[True, (sbx[1:] != sbx[:-1]) | (sby[1:] != sby[:-1])]
    starts = np.flatnonzero(change)
    ends = np.r_[starts[1:], len(order)]
    return {(int(sbx[i]), int(sby[i])): order[i:j] for i, j in zip(starts, ends)}


def _neighborhood(bins, key) -> Optional[np.ndarray]:
    bx, by = key
    found = [bins.get((bx + dx, by + dy))
             for dx in (-1, 0, 1) for dy in (-1, 0, 1)]
    found = [f for f in found if f is not None]
    if not found:
        return None
    return np.sort(np.concatenate(found))


def truncated_kernel_matrix(centers: np.ndarray, r0: float, cutoff: float,
                            ridge: float) -> scipy.sparse.csr_matrix:
    """Kernel values for center pairs within cutoff, plus ridge on the diagonal."""
    m = len(centers)
    bins = _bin_points(centers, cutoff)
    inv_r02 = 1.0 / (r0 * r0)
    c2 = cutoff * cutoff
    rows, cols, vals = [], [], []
    for key, idx in bins.items():
        cand = _neighborhood(bins, key)
        dx = centers[idx, 0][:, None] - centers[cand, 0][None, :]
        dy = centers[idx, 1][:, None] - centers[cand, 1][None, :]
        d2 = dx * dx + dy * dy
        ii, jj = np.nonzero(d2 <= c2)
        rows.append(idx[ii].astype(np.int32))
        cols.append(cand[jj].astype(np.int32))
        vals.append(np.exp(-d2[ii, jj] * inv_r02))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    vals[rows == cols] += ridge
    return scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(m, m))


def _check_duplicate_centers(centers: np.ndarray):
    unique = np.unique(centers, axis=0)
    if len(unique) < len(centers):
        raise SolverError(
            "duplicate (x, y) seed locations make the unregularized system singular")


def _solve_cg(matrix: scipy.sparse.csr_matrix, rhs: np.ndarray,
              rel_tol: float, max_iters: int) -> np.ndarray:
    """Conjugate gradient to a verified relative residual, restarting on drift."""
    norm_rhs = np.linalg.norm(rhs)
    if norm_rhs == 0:
        return np.zeros_like(rhs)
    w = np.zeros_like(rhs)
    iters_left = max_iters
    while iters_left > 0:
        r = rhs - matrix @ w
        if np.linalg.norm(r) <= rel_tol * norm_rhs:
            return w
        p = r.copy()
        rs = float(r @ r)
        while iters_left > 0:
            ap = matrix @ p
            pap = float(p @ ap)
            if pap <= 0:
                raise SolverError(
                    f"conjugate gradient met non-positive curvature ({pap:.3e}); "
                    "the truncated system is not positive definite")
            alpha = rs / pap
            w += alpha * p
            r -= alpha * ap
            iters_left -= 1
            rs_new = float(r @ r)
            if math.sqrt(rs_new) <= rel_tol * norm_rhs:
                break
            p = r + (rs_new / rs) * p
            rs = rs_new
        # recurrence residual reached tolerance; verify against the true residual
        true_res = np.linalg.norm(rhs - matrix @ w)
        if true_res <= rel_tol * norm_rhs:
            return w
    final = np.linalg.norm(rhs - matrix @ w) / norm_rhs
    raise SolverError(
        f"conjugate gradient did not reach {rel_tol:.1e} within {max_iters} "
        f"iterations (final relative residual {final:.3e})")


def fit_rbf(seeds: PointCloud, cfg: RbfConfig, avg_nn: float) -> RbfModel:
    """Solve for the kernel weights that reproduce the seed heights."""
    if len(seeds) == 0:
        raise UsageError("fit_rbf requires a non-empty seed cloud")
    if not avg_nn > 0:
        raise UsageError(f"avg_nn must be > 0, got {avg_nn}")
    centers = np.ascontiguousarray(seeds.points[:, :2])
    values = np.ascontiguousarray(seeds.points[:, 2])
    m = len(centers)
    r0 = cfg.r0_multiplier * avg_nn
    cutoff = cfg.cutoff_multiplier * r0
    if cfg.ridge == 0:
        _check_duplicate_centers(centers)

    if cfg.solver == "dense_exact":
        if m > DENSE_EXACT_LIMIT:
            raise UsageError(
                f"dense_exact allows at most {DENSE_EXACT_LIMIT} seeds, got {m}")
        dx = centers[:, 0][:, None] - centers[:, 0][None, :]
        dy = centers[:, 1][:, None] - centers[:, 1][None, :]
        phi = np.exp(-(dx * dx + dy * dy) / (r0 * r0))
        phi[np.diag_indices(m)] += cfg.ridge
        try:
            weights = np.linalg.solve(phi, values)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"dense solve failed: {exc}") from None
    else:
        matrix = truncated_kernel_matrix(centers, r0, cutoff, cfg.ridge)
        if cfg.solver == "sparse_cg":
            max_iters = cfg.cg_max_iters if cfg.cg_max_iters is not None else 10 * m
            weights = _solve_cg(matrix, values, cfg.cg_rel_tol, max_iters)
        else:  # truncated_cholesky
            dense = matrix.toarray()
            del matrix
            try:
                factor = scipy.linalg.cho_factor(
                    dense, lower=True, overwrite_a=True, check_finite=False)
            except np.linalg.LinAlgError as exc:
                raise SolverError(
                    f"Cholesky factorization failed ({exc}); the truncated system "
                    "is not positive definite at this cutoff/ridge") from None
            weights = scipy.linalg.cho_solve(factor, values, check_finite=False)
    return RbfModel(centers=centers, values=values, weights=weights, r0=r0)


def _radius_indices(tree: KdTree, query: np.ndarray, radius: float) -> np.ndarray:
    """Indices of tree points within radius of query, ascending."""
    r2 = radius * radius
    out = []
    stack = [(tree.root, 0.0, np.zeros(tree.points.shape[1]))]
    while stack:
        node, bound, offsets = stack.pop()
        if bound > r2:
            continue
        if isinstance(node, _Leaf):
            diff = node.pts - query
            d2 = np.einsum("ij,ij->i", diff, diff)
            out.append(node.indices[d2 <= r2])
            continue
        delta = query[node.dim] - node.value
        near, far = (node.left, node.right) if delta < 0 else (node.right, node.left)
        old = offsets[node.dim]
        far_offsets = offsets.copy()
        far_offsets[node.dim] = abs(delta)
        stack.append((far, bound - old * old + delta * delta, far_offsets))
        stack.append((near, bound, offsets))
    if not out:
        return np.empty(0, dtype=np.int64)
    return np.sort(np.concatenate(out))


def eval_rbf(model: RbfModel, query: tuple[float, float],
             centers_index: KdTree, cutoff: float) -> float:
    """Height at one (x, y): weighted kernel sum over centers within cutoff.

    Centers are summed in ascending index order; with no center in range
    the value is 0 (callers mask such cells out).
    """
    q = np.asarray(query, dtype=np.float64)
    idx = _radius_indices(centers_index, q, cutoff)
    if len(idx) == 0:
        return 0.0
    d = np.sqrt(((model.centers[idx] - q) ** 2).sum(axis=1))
    return float(np.dot(model.weights[idx], gaussian_kernel(d, model.r0)))


def _eval_grid(model: RbfModel, queries: np.ndarray, cutoff: float) -> np.ndarray:
    """Vectorized eval_rbf over (Q, 2) queries using spatial binning."""
    values = np.zeros(len(queries))
    if len(queries) == 0:
        return values
    center_bins = _bin_points(model.centers, cutoff)
    query_bins = _bin_points(queries, cutoff)
    inv_r02 = 1.0 / (model.r0 * model.r0)
    c2 = cutoff * cutoff
    for key, qidx in query_bins.items():
        cand = _neighborhood(center_bins, key)
        if cand is None:
            continue
        dx = queries[qidx, 0][:, None] - model.centers[cand, 0][None, :]
        dy = queries[qidx, 1][:, None] - model.centers[cand, 1][None, :]
        d2 = dx * dx + dy * dy
        phi = np.where(d2 <= c2, np.exp(-d2 * inv_r02), 0.0)
        values[qidx] = phi @ model.weights[cand]
    return values


def make_grid(seeds: PointCloud, cfg: RbfConfig, avg_nn: float) -> DenseGrid:
    """Evaluation grid over the seeds' (x, y) bounding box.

    Spacing is avg_nn / upsample; a cell is masked IN iff its nearest
    seed lies within mask_multiplier * avg_nn, which fills interior holes
    without extrapolating past the silhouette.
    """
    if len(seeds) == 0:
        raise UsageError("make_grid requires a non-empty seed cloud")
    xy = seeds.points[:, :2]
    spacing = avg_nn / cfg.upsample
    x0, y0 = xy.min(axis=0)
    x1, y1 = xy.max(axis=0)
    # epsilon swallows float drift in span/spacing without adding phantom cells
    nx = int(math.ceil((x1 - x0) / spacing - 1e-9)) + 1
    ny = int(math.ceil((y1 - y0) / spacing - 1e-9)) + 1

    radius = cfg.mask_multiplier * avg_nn
    xs = x0 + spacing * np.arange(nx)
    ys = y0 + spacing * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys)
    cells = np.stack([gx.ravel(), gy.ravel()], axis=1)
    mask = np.zeros(len(cells), dtype=bool)
    seed_bins = _bin_points(xy, radius)
    cell_bins = _bin_points(cells, radius)
    r2 = radius * radius
    for key, cidx in cell_bins.items():
        cand = _neighborhood(seed_bins, key)
        if cand is None:
            continue
        dx = cells[cidx, 0][:, None] - xy[cand, 0][None, :]
        dy = cells[cidx, 1][:, None] - xy[cand, 1][None, :]
        mask[cidx] = ((dx * dx + dy * dy) <= r2).any(axis=1)
    return DenseGrid(origin=(float(x0), float(y0)), spacing=spacing,
                     nx=nx, ny=ny, mask=mask.reshape(ny, nx))


def densify(seeds: PointCloud, cfg: RbfConfig = RbfConfig()) -> PointCloud:
    """Seeds plus interpolated grid points (seeds first, grid row-major).

    Grid cells come from make_grid, heights from the fitted model, and
    colors (when the seeds carry any) as the per-channel rounded mean of
    each new point's color_k nearest seeds in 3D.  Interpolated points
    get source pixel (-1, -1) when the seeds are pixel-tagged.
    """
    if len(seeds) < 2:
        raise UsageError("densify requires at least 2 seeds")
    avg_nn = average_nn_distance(seeds.points)
    model = fit_rbf(seeds, cfg, avg_nn)
    grid = make_grid(seeds, cfg, avg_nn)
    cutoff = cfg.cutoff_multiplier * model.r0

    gx, gy = grid.cell_xy()
    flat_mask = grid.mask.ravel()
    queries = np.stack([gx.ravel()[flat_mask], gy.ravel()[flat_mask]], axis=1)
    z = _eval_grid(model, queries, cutoff)
    new_points = np.concatenate([queries, z[:, None]], axis=1)

    new_colors = None
    if seeds.colors is not None and len(new_points):
        tree = build_exact(seeds.points)
        k = min(cfg.color_k, len(seeds))
        seed_colors = seeds.colors.astype(np.float64)
        new_colors = np.empty((len(new_points), 3), dtype=np.uint8)
        for i, p in enumerate(new_points):
            nn = knn_exact(tree, p, k)
            mean = seed_colors[nn.indices].mean(axis=0)
            new_colors[i] = np.floor(mean + 0.5).astype(np.uint8)

    points = np.concatenate([seeds.points, new_points])
    colors = None
    if seeds.colors is not None:
        fill = new_colors if new_colors is not None else np.empty((0, 3), np.uint8)
        colors = np.concatenate([seeds.colors, fill])
    source_pixel = None
    if seeds.source_pixel is not None:
        sentinel = np.full((len(new_points), 2), -1, dtype=np.int64)
        source_pixel = np.concatenate([seeds.source_pixel, sentinel])
    return PointCloud(points=points, colors=colors, source_pixel=source_pixel)
