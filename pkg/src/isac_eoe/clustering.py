"""DBSCAN clustering of incidence points and conversion to polar training sets."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, DegenerateGeometryError
from .geometry import DEGENERACY_TOL


@dataclass(frozen=True)
class DbscanParams:
    eps: float = 0.5
    min_pts: int = 4

    def __post_init__(self):
        if not self.eps > 0 or self.min_pts < 1:
            raise ConfigError("DBSCAN needs eps > 0 and min_pts >= 1")


@dataclass(frozen=True)
class Cluster:
    """A DBSCAN cluster; ``bias`` shifts the polar origin, never the centroid."""

    indices: tuple
    centroid: np.ndarray
    bias: np.ndarray = field(default_factory=lambda: np.zeros(2))
    cluster_id: int = 0

    @property
    def member_count(self):
        return len(self.indices)

    @property
    def origin(self):
        return np.asarray(self.centroid) + np.asarray(self.bias)

    def with_bias(self, bias):
        return Cluster(self.indices, self.centroid, np.asarray(bias, float),
                       self.cluster_id)


@dataclass(frozen=True)
class PolarTrainingSet:
    """Per-cluster ``(angle, radius)`` regression data about ``origin``."""

    angles: np.ndarray
    radii: np.ndarray
    origin: np.ndarray = field(default_factory=lambda: np.zeros(2))
    cluster_id: int = 0

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float).reshape(-1)
        r = np.asarray(self.radii, dtype=float).reshape(-1)
        if a.shape != r.shape:
            raise ConfigError("angles and radii must have equal length")
        if np.any(r < 0):
            raise ConfigError("radii must be non-negative")
        if np.any(np.abs(a) > np.pi):
            raise ConfigError("angles must lie in [-pi, pi]")
        object.__setattr__(self, "angles", a)
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "origin", np.asarray(self.origin, float).reshape(2))

    def __len__(self):
        return self.angles.size

    def to_cartesian(self):
        return self.origin + self.radii[:, None] * np.column_stack(
            [np.cos(self.angles), np.sin(self.angles)])


def dbscan(points, params=None):
    """Density-based clustering with a Euclidean metric.

    A point is core when at least ``min_pts`` points (itself included) lie
    within ``eps``. Core points reachable from each other form a cluster.
    A border point joins the cluster of its nearest core neighbour (lowest
    index on ties), so the partition does not depend on input order.
    Clusters are numbered by their smallest core index.

    Returns
    -------
    clusters : list of Cluster
    noise : set of int
    """
    params = params or DbscanParams()
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        raise ConfigError("dbscan needs at least one point")
    tree = cKDTree(pts)
    neighbours = tree.query_ball_point(pts, params.eps)
    core = np.array([len(nb) >= params.min_pts for nb in neighbours])

    labels = np.full(n, -1)
    n_clusters = 0
    for i in np.flatnonzero(core):
        if labels[i] >= 0:
            continue
        labels[i] = n_clusters
        queue = deque([i])
        while queue:
            j = queue.popleft()
            for k in neighbours[j]:
                if core[k] and labels[k] < 0:
                    labels[k] = n_clusters
                    queue.append(k)
        n_clusters += 1

    for i in np.flatnonzero(~core):
        cores = [k for k in neighbours[i] if core[k]]
        if cores:
            d = np.hypot(*(pts[cores] - pts[i]).T)
            best = min(zip(d, cores))[1]
            labels[i] = labels[best]

    clusters = []
    for c in range(n_clusters):
        idx = tuple(int(i) for i in np.flatnonzero(labels == c))
        clusters.append(Cluster(idx, pts[list(idx)].mean(axis=0), cluster_id=c))
    noise = {int(i) for i in np.flatnonzero(labels < 0)}
    return clusters, noise


def to_polar(cluster, points, bias=None):
    """Polar coordinates of the cluster members about ``centroid + bias``.

    Member order is preserved. ``bias`` defaults to ``cluster.bias``.
    """
    bias = cluster.bias if bias is None else np.asarray(bias, float)
    origin = np.asarray(cluster.centroid) + bias
    pts = np.asarray(points, dtype=float)[list(cluster.indices)]
    d = pts - origin
    radii = np.hypot(d[:, 0], d[:, 1])
    if np.any(radii <= DEGENERACY_TOL):
        raise DegenerateGeometryError("a cluster member coincides with the polar origin")
    return PolarTrainingSet(np.arctan2(d[:, 1], d[:, 0]), radii, origin,
                            cluster.cluster_id)
