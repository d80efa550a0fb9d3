"""K-means refinement of the cropped facial cloud.

Clustering runs on the 3D coordinates only, which separates the face
from background surfaces by depth.  Seeded k-means++ initialization
keeps runs reproducible; a plain uniform-random mode is available.
The cluster containing the point nearest the detected face center is
the one kept.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoFaceError, UsageError
from .geometry import PixelRect, PointCloud


@dataclass(frozen=True)
class KMeansConfig:
    k: int = 3
    max_iters: int = 100
    tol: float = 1e-6  # meters of centroid displacement
    rng_seed: int = 42
    init: str = "kmeans++"  # or "random"

    def __post_init__(self):
        if self.k < 1:
            raise UsageError(f"k must be >= 1, got {self.k}")
        if self.max_iters < 1:
            raise UsageError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tol > 0:
            raise UsageError(f"tol must be > 0, got {self.tol}")
        if self.init not in ("kmeans++", "random"):
            raise UsageError(f"unknown init {self.init!r}")


@dataclass(frozen=True)
class Clustering:
    labels: np.ndarray        # (n,) int, values < k
    centroids: np.ndarray     # (k, 3) float64
    inertia: float            # sum of squared distances to assigned centroids
    inertia_history: tuple[float, ...] = field(default=())


def _init_centroids(points: np.ndarray, k: int, cfg: KMeansConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.rng_seed)
    n = len(points)
    if cfg.init == "random":
        idx = rng.choice(n, size=k, replace=False)
        return points[idx].copy()
    # k-means++: subsequent centers drawn proportional to squared distance
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(0, n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[i:] = centroids[0]
            break
        centroids[i] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((points - centroids[i]) ** 2).sum(axis=1))
    return centroids


def _assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # argmin breaks ties toward the lowest cluster index
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def _inertia(points, labels, centroids) -> float:
    return float(((points - centroids[labels]) ** 2).sum())


def kmeans(points: np.ndarray, cfg: KMeansConfig = KMeansConfig()) -> Clustering:
    """Lloyd iterations until centroid displacement drops below cfg.tol.

    Empty clusters are dropped (k shrinks, labels stay compact).  The
    returned centroids are exactly the means of their member points.
    """
    points = np.asarray(points, dtype=np.float64)
    if len(points) == 0:
        raise UsageError("kmeans requires a non-empty point set")
    k = min(cfg.k, len(points))
    centroids = _init_centroids(points, k, cfg)
    history = []
    labels = None
    for _ in range(cfg.max_iters):
        labels = _assign(points, centroids)
        present = np.unique(labels)
        if len(present) < len(centroids):
            remap = np.full(len(centroids), -1, dtype=np.int64)
            remap[present] = np.arange(len(present))
            labels = remap[labels]
            old = centroids[present]
        else:
            old = centroids
        centroids = np.stack([points[labels == j].mean(axis=0)
                              for j in range(len(present))])
        history.append(_inertia(points, labels, centroids))
        shift = np.sqrt(((centroids - old) ** 2).sum(axis=1)).max()
        if shift < cfg.tol:
            break
    return Clustering(labels=labels, centroids=centroids,
                      inertia=history[-1], inertia_history=tuple(history))


def select_face_cluster(cloud: PointCloud, clustering: Clustering,
                        face_rect: PixelRect) -> PointCloud:
    """Keep the cluster containing the point nearest the face-rect center.

    The seed is the cloud point whose source pixel is closest (Euclidean
    in pixel space) to the rect center; pixels with invalid depth never
    made it into the cloud, so this doubles as the fallback for a center
    pixel without depth.
    """
    if len(cloud) == 0:
        raise NoFaceError("cannot select a face cluster from an empty cloud")
    if cloud.source_pixel is None:
        raise UsageError("select_face_cluster requires a cloud with source_pixel")
    if len(clustering.labels) != len(cloud):
        raise UsageError(f"{len(clustering.labels)} labels for {len(cloud)} points")
    cu, cv = face_rect.center()
    d2 = ((cloud.source_pixel[:, 0] - cu) ** 2
          + (cloud.source_pixel[:, 1] - cv) ** 2)
    seed = int(np.argmin(d2))
    keep = clustering.labels == clustering.labels[seed]
    return cloud.select(keep)
