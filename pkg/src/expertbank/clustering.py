"""Lloyd's k-means with k-means++ seeding over latent rows.

Used to split each task's latent cloud into the per-cluster groups that
get their own Gaussian signature. The cluster -> class-label majority map
is an evaluation-time convenience only; training never sees labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics


@dataclass
class KMeansModel:
    centers: np.ndarray
    inertia: float
    n_iter: int
    inertia_trace: list = field(default_factory=list)


@dataclass
class ClusterLabelMap:
    """labels[r] is the majority class label of cluster r."""
    labels: np.ndarray


def _sq_dists(z, centers):
    # |z|^2 + |c|^2 - 2 z.c, clipped against tiny negative round-off
    d2 = (
        np.sum(z * z, axis=1)[:, None]
        + np.sum(centers * centers, axis=1)[None, :]
        - 2.0 * (z @ centers.T)
    )
    return np.maximum(d2, 0.0)


def _assign(centers, z):
    if z.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    # argmin takes the first minimum, so ties go to the lowest cluster id
    return _sq_dists(z, centers).argmin(axis=1)


def assign(model, z):
    z = np.asarray(z, dtype=np.float64)
    return _assign(model.centers, z)


def cluster_loss(model, z):
    """Total squared distance of each row to its nearest center."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] == 0:
        return 0.0
    d2 = _sq_dists(z, model.centers)
    return float(d2[np.arange(z.shape[0]), d2.argmin(axis=1)].sum())


def _kmeanspp_init(z, r, rng):
    n = z.shape[0]
    first = int(rng.integers(n))
    centers = [z[first]]
    d2 = np.sum((z - z[first]) ** 2, axis=1)
    for _ in range(1, r):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))  # all remaining mass identical
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(z[idx])
        d2 = np.minimum(d2, np.sum((z - z[idx]) ** 2, axis=1))
    return np.array(centers)


def _lloyd(z, centers, max_iter):
    n, r = z.shape[0], centers.shape[0]
    centers = centers.copy()
    prev = None
    trace = []
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        d2 = _sq_dists(z, centers)
        ids = d2.argmin(axis=1)
        trace.append(float(d2[np.arange(n), ids].sum()))
        if prev is not None and np.array_equal(ids, prev):
            break
        new_centers = centers.copy()
        empties = []
        for c in range(r):
            members = ids == c
            if members.any():
                new_centers[c] = z[members].mean(axis=0)
            else:
                empties.append(c)
        if empties:
            # re-seed each empty cluster on the point farthest from its
            # current center; mask taken points so repairs stay distinct
            own = d2[np.arange(n), ids].copy()
            for c in empties:
                far = int(own.argmax())
                new_centers[c] = z[far]
                own[far] = -1.0
        centers = new_centers
        prev = ids
    return centers, ids, trace, iterations


def kmeans_fit(z, r, max_iter=100, seed=0, n_init=10):
    """Best of n_init k-means++ restarts by final inertia.

    Returns (KMeansModel, assignments). Deterministic in (z, r, seed):
    restarts draw from spawned sub-streams and ties keep the earliest
    restart.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError(f"expected 2-d data, got shape {z.shape}")
    if r < 1:
        raise ValueError("need at least one cluster")
    if z.shape[0] < r:
        raise ValueError(f"cannot fit {r} clusters to {z.shape[0]} samples")
    numerics.ensure_finite(z, "kmeans input")
    best = None
    for restart in range(n_init):
        rng = numerics.spawn_rng(seed, restart)
        init = _kmeanspp_init(z, r, rng)
        centers, ids, trace, iters = _lloyd(z, init, max_iter)
        if best is None or trace[-1] < best[0]:
            best = (trace[-1], centers, ids, trace, iters)
    inertia, centers, ids, trace, iters = best
    return KMeansModel(centers, inertia, iters, trace), ids


def fit_label_map(model, z, labels):
    """Majority class label per cluster; clusters that receive no mapping
    rows fall back to the global majority. Ties pick the smallest label."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] == 0:
        raise ValueError("need a nonempty 1-d label vector")
    if np.any(labels < 0):
        raise ValueError("labels must be nonnegative integers")
    labels = labels.astype(np.int64)
    ids = assign(model, z)
    if ids.shape[0] != labels.shape[0]:
        raise ValueError("data and labels disagree in length")
    fallback = int(np.bincount(labels).argmax())
    table = np.full(model.centers.shape[0], fallback, dtype=np.int64)
    for c in range(model.centers.shape[0]):
        members = ids == c
        if members.any():
            table[c] = int(np.bincount(labels[members]).argmax())
    return ClusterLabelMap(table)


def apply_label_map(label_map, cluster_ids):
    return label_map.labels[np.asarray(cluster_ids, dtype=np.int64)]
