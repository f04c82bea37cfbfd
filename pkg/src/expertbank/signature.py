"""Latent Gaussian signatures and the structured sampler built on them.

A signature is the compact footprint a task leaves behind: per latent
cluster, the mean plus the eigendecomposition of the (1/N-normalized)
covariance. Sampling runs the whitening map backwards — draw white noise,
color it with V D^{1/2}, add the mean — so regenerated latents reproduce
the stored second moments without keeping any original data around.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics, vae


class DegenerateClusterError(ValueError):
    """Too few rows to form a covariance (fewer than two samples)."""


@dataclass(frozen=True)
class LatentSignature:
    task_id: int
    cluster_id: int
    mean: np.ndarray      # (d,)
    eigvals: np.ndarray   # (d,) descending, clamped strictly positive
    eigvecs: np.ndarray   # (d, d), orthonormal columns

    @property
    def dim(self):
        return self.mean.shape[0]

    def covariance(self):
        return (self.eigvecs * self.eigvals) @ self.eigvecs.T

    def value_count(self):
        """Float values this signature persists: mean + spectrum + basis."""
        return self.mean.size + self.eigvals.size + self.eigvecs.size


@dataclass
class GeneratedSet:
    """Synthetic stand-in for one task's training data."""
    task_id: int
    latents: np.ndarray
    data: np.ndarray
    labels: np.ndarray  # task id per row (pseudo task labels, not classes)


def extract_signature(z_cluster, task_id, cluster_id, tol=1e-8):
    """Mean and clamped eigendecomposition of a latent cluster's covariance."""
    z = np.asarray(z_cluster, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError(f"expected 2-d latents, got shape {z.shape}")
    if z.shape[0] < 2:
        raise DegenerateClusterError(
            f"cluster {cluster_id} has {z.shape[0]} samples, need at least 2")
    numerics.ensure_finite(z, "cluster latents")
    mean = z.mean(axis=0)
    centered = z - mean
    cov = centered.T @ centered / z.shape[0]
    eigvals, eigvecs = numerics.sym_eig(cov)
    eigvals = numerics.clamp_spectrum(eigvals, tol)
    return LatentSignature(int(task_id), int(cluster_id), mean, eigvals, eigvecs)


def whitening_factor(sig):
    """F = V D^{-1/2}; F.T maps signature-distributed latents to white."""
    return sig.eigvecs / np.sqrt(sig.eigvals)[None, :]


def dewhitening_factor(sig):
    """V D^{1/2}, the inverse coloring map of whitening_factor."""
    return sig.eigvecs * np.sqrt(sig.eigvals)[None, :]


def sample_structured(sig, n, rng):
    """n latent draws from N(mean, V D V^T) via de-whitened white noise."""
    s = numerics.standard_normal(rng, n, sig.dim)
    return s @ dewhitening_factor(sig).T + sig.mean


def struct_loss(own_center, foreign_centers, latents):
    """Sum over samples of (distance to own center) minus the summed
    distances to every foreign cluster center. Negative values mean the
    batch sits closer to home than to the other clusters."""
    latents = np.asarray(latents, dtype=np.float64)
    own = np.asarray(own_center, dtype=np.float64)
    total = float(np.linalg.norm(latents - own, axis=1).sum())
    for center in foreign_centers:
        center = np.asarray(center, dtype=np.float64)
        total -= float(np.linalg.norm(latents - center, axis=1).sum())
    return total


def split_counts(total, parts):
    """Spread `total` over `parts` as evenly as possible, remainder to the
    lowest indices: split_counts(7, 3) == [3, 2, 2]."""
    if parts < 1:
        raise ValueError("need at least one part")
    if total < 0:
        raise ValueError("total must be nonnegative")
    base, rem = divmod(total, parts)
    return [base + 1] * rem + [base] * (parts - rem)


def generate(experts, task_id, n, rng, struct_threshold=0.0, max_redraws=3):
    """Regenerate n samples for a stored task.

    Splits n over the task's cluster signatures, draws structured latents
    per cluster, and decodes them with the task's own decoder. When a
    struct_threshold is given and the task has foreign clusters, each
    cluster batch is re-drawn (up to max_redraws) while its structural
    loss sits above the threshold — a cheap rejection filter against
    off-distribution draws. Pass struct_threshold=None to disable.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    expert = experts.get(task_id)
    sigs = expert.signatures
    if not sigs:
        raise ValueError(f"task {task_id} has no signatures")
    centers = expert.kmeans.centers
    counts = split_counts(n, len(sigs))
    pieces = []
    for sig, count in zip(sigs, counts):
        if count == 0:
            continue
        z = sample_structured(sig, count, rng)
        if struct_threshold is not None and len(sigs) > 1:
            own = centers[sig.cluster_id]
            foreign = [centers[s.cluster_id] for s in sigs if s is not sig]
            for _ in range(max_redraws):
                if struct_loss(own, foreign, z) <= struct_threshold * count:
                    break
                z = sample_structured(sig, count, rng)
        pieces.append(z)
    latents = np.vstack(pieces)
    data = vae.decode_batch(expert.params, latents)
    labels = np.full(latents.shape[0], int(task_id), dtype=np.int64)
    return GeneratedSet(int(task_id), latents, data, labels)
