"""
Clustering used at both filtering points of the pipeline.

K-means groups local models during trajectory collection; mean-shift (or
DBSCAN, or K-means) groups the per-client losses during detection. Every
function returns a :class:`Clustering` whose ``largest`` cluster is the
accepted set.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .exceptions import WorkbenchError

logger = logging.getLogger(__name__)

NOISE = -1
BANDWIDTH_FLOOR = 1e-9


@dataclass(frozen=True, eq=False)
class Clustering:
    """Cluster label per point (``-1`` for DBSCAN noise) and the largest cluster id."""

    labels: np.ndarray
    largest: int

    @property
    def members(self):
        """Indices of the points in the largest cluster."""
        return np.flatnonzero(self.mask())

    @property
    def n_clusters(self):
        return len(set(self.labels.tolist()) - {NOISE})

    def mask(self):
        if self.largest == NOISE:
            return np.zeros(len(self.labels), dtype=bool)
        return self.labels == self.largest


def _as_points(values):
    points = np.asarray(values, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if points.ndim != 2 or len(points) == 0:
        raise WorkbenchError("clustering needs a non-empty list of scalars or vectors")
    return points


def _pairwise(points):
    return squareform(pdist(points))


def median_pairwise_distance(values):
    """Bandwidth heuristic: median pairwise distance, floored at 1e-9."""
    points = _as_points(values)
    n = len(points)
    if n < 2:
        return BANDWIDTH_FLOOR
    return max(float(np.median(pdist(points))), BANDWIDTH_FLOOR)


def _largest(points, labels, tie_key):
    ids = sorted(set(labels.tolist()) - {NOISE})
    if not ids:
        return NOISE
    sizes = {cid: int(np.sum(labels == cid)) for cid in ids}
    best = max(sizes.values())
    tied = [cid for cid in ids if sizes[cid] == best]
    return min(tied, key=lambda cid: (tie_key(points[labels == cid]), cid))


def _spread_from_median(points):
    center = np.median(points, axis=0)

    def key(member_points):
        return float(np.linalg.norm(member_points - center, axis=1).mean())

    return key


def _mean_value(member_points):
    return float(member_points.mean())


def kmeans(vectors, k, seed=0, max_iter=100):
    """K-means++ seeding followed by Lloyd iterations.

    Stops when assignments stop changing or after ``max_iter`` rounds. Size
    ties for the largest cluster go to the cluster whose members are closer,
    on average, to the coordinate-wise median of all points.
    """
    if k <= 0:
        raise WorkbenchError(f"K must be positive, got {k}")
    points = _as_points(vectors)
    n = len(points)
    if n < k:
        raise WorkbenchError(f"K-means with K={k} needs at least {k} points, got {n}")
    rng = np.random.default_rng(seed)

    centers = [points[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min([((points - c) ** 2).sum(axis=1) for c in centers], axis=0)
        total = d2.sum()
        if total <= 0.0:
            centers.append(points[rng.integers(n)])
        else:
            centers.append(points[rng.choice(n, p=d2 / total)])
    centers = np.array(centers)

    labels = None
    for iteration in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for cid in range(k):
            members = points[labels == cid]
            if len(members):
                centers[cid] = members.mean(axis=0)
    logger.debug("kmeans converged after %d iterations", iteration + 1)

    largest = _largest(points, labels, _spread_from_median(points))
    return Clustering(labels.astype(np.int64), largest)


def meanshift(values, bandwidth=None, max_iter=300, tol=1e-12):
    """Flat-kernel mean-shift.

    Each point climbs to the mean of the original points within
    ``bandwidth``; converged modes within ``bandwidth`` of each other
    (single linkage) form one cluster. Size ties go to the lower mean value.
    """
    points = _as_points(values)
    if bandwidth is None:
        bandwidth = median_pairwise_distance(points)
    bandwidth = max(float(bandwidth), BANDWIDTH_FLOOR)

    modes = points.copy()
    for i in range(len(points)):
        current = points[i]
        for _ in range(max_iter):
            inside = np.linalg.norm(points - current, axis=1) <= bandwidth
            shifted = points[inside].mean(axis=0)
            if np.linalg.norm(shifted - current) <= tol:
                current = shifted
                break
            current = shifted
        modes[i] = current

    labels = np.full(len(points), NOISE, dtype=np.int64)
    next_id = 0
    for i in range(len(points)):
        if labels[i] != NOISE:
            continue
        labels[i] = next_id
        frontier = [i]
        while frontier:
            j = frontier.pop()
            close = np.flatnonzero(
                (labels == NOISE) & (np.linalg.norm(modes - modes[j], axis=1) <= bandwidth)
            )
            labels[close] = next_id
            frontier.extend(close.tolist())
        next_id += 1

    largest = _largest(points, labels, _mean_value)
    return Clustering(labels, largest)


def dbscan(values, eps=None, min_pts=2):
    """Density clustering; a point's neighbourhood includes itself.

    Points that are neither core points nor reachable from one are labelled
    ``-1`` (noise) and never belong to the largest cluster.
    """
    points = _as_points(values)
    if eps is None:
        eps = median_pairwise_distance(points)
    n = len(points)
    neighbours = [np.flatnonzero(row <= eps) for row in _pairwise(points)]
    core = np.array([len(nb) >= min_pts for nb in neighbours])

    labels = np.full(n, NOISE, dtype=np.int64)
    next_id = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = next_id
        frontier = [i]
        while frontier:
            j = frontier.pop()
            if not core[j]:
                continue
            for m in neighbours[j]:
                if labels[m] == NOISE:
                    labels[m] = next_id
                    frontier.append(m)
        next_id += 1

    largest = _largest(points, labels, _mean_value)
    return Clustering(labels, largest)


CLUSTERING_METHODS = ('kmeans', 'meanshift', 'dbscan')


def make_clusterer(name, k=2, seed=0, bandwidth=None, min_pts=2):
    """Return ``cluster(values) -> Clustering`` for a method name."""
    if name == 'kmeans':
        return lambda values: kmeans(values, min(k, len(values)), seed=seed)
    if name == 'meanshift':
        return lambda values: meanshift(values, bandwidth=bandwidth)
    if name == 'dbscan':
        return lambda values: dbscan(values, eps=bandwidth, min_pts=min_pts)
    raise WorkbenchError(f"unknown clustering method {name!r}; choose from {CLUSTERING_METHODS}")
