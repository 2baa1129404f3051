"""Independent brute-force reference implementations used by the tests."""

import numpy as np


def brute_dbscan(points, eps, min_pts):
    """O(n^2) DBSCAN; border points join their nearest core (lowest index on ties).

    Returns a label array with -1 for noise; labels are component ids in an
    arbitrary order.
    """
    pts = np.asarray(points, float)
    n = len(pts)
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    adj = dist <= eps
    core = adj.sum(1) >= min_pts
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if core[i] and core[j] and adj[i, j]:
                parent[find(i)] = find(j)
    labels = np.full(n, -1)
    for i in range(n):
        if core[i]:
            labels[i] = find(i)
    for i in range(n):
        if not core[i]:
            cand = [(dist[i, j], j) for j in range(n) if core[j] and adj[i, j]]
            if cand:
                labels[i] = labels[min(cand)[1]]
    return labels


def partition(labels):
    """Labels -> (set of frozensets of clustered indices, noise set)."""
    groups = {}
    for i, lab in enumerate(labels):
        if lab >= 0:
            groups.setdefault(lab, set()).add(i)
    return {frozenset(g) for g in groups.values()}, {i for i, lab in enumerate(labels) if lab < 0}


def dense_log_marginal(angles, radii, sf2, l2, sn2, mu):
    """Log marginal likelihood from an explicit inverse and determinant."""
    a = np.asarray(angles, float)
    r = np.asarray(radii, float)
    d = a[:, None] - a[None, :]
    k = sf2 * np.exp(-2 * np.sin(d / 2) ** 2 / l2)
    ky = k + sn2 * np.eye(len(a))
    eta = r - mu
    sign, logdet = np.linalg.slogdet(ky)
    assert sign > 0
    return float(-0.5 * eta @ np.linalg.inv(ky) @ eta - 0.5 * logdet
                 - 0.5 * len(a) * np.log(2 * np.pi))


def ray_rectangle_radius(half_w, half_h, theta):
    """Distance from the centre to the rectangle boundary along ``theta``.

    Intersects the ray with each of the four edge segments separately.
    """
    u = np.array([np.cos(theta), np.sin(theta)])
    corners = [(-half_w, -half_h), (half_w, -half_h), (half_w, half_h), (-half_w, half_h)]
    best = np.inf
    for k in range(4):
        p = np.array(corners[k], float)
        q = np.array(corners[(k + 1) % 4], float)
        e = q - p
        m = np.column_stack([u, -e])
        if abs(np.linalg.det(m)) < 1e-15:
            continue
        t, s = np.linalg.solve(m, p)
        if t > 0 and -1e-12 <= s <= 1 + 1e-12:
            best = min(best, t)
    return best
