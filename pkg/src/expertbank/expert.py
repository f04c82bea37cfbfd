"""Per-task experts and the append-only store that holds them.

One expert per task: an encoder/decoder pair trained on that task alone,
k-means centers over its posterior-mean latents, and one Gaussian
signature per cluster. After train_expert the expert is finalized --
nothing about an old task is ever revisited or fine-tuned, which is what
makes forgetting structurally impossible rather than merely discouraged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import clustering, numerics, signature, vae
from .vae import VaeConfig


class FrozenExpertError(RuntimeError):
    """Attempt to (re)train a finalized expert."""


@dataclass
class ExpertConfig:
    vae: VaeConfig
    clusters: int = 2
    kmeans_iters: int = 100
    kmeans_inits: int = 10
    spectrum_tol: float = 1e-8
    # one signature per cluster (default) or a single pooled signature for
    # the whole task
    per_cluster_signatures: bool = True

    def __post_init__(self):
        assert self.clusters >= 1


@dataclass
class TaskExpert:
    task_id: int
    params: vae.VaeParams
    kmeans: clustering.KMeansModel | None = None
    signatures: list = field(default_factory=list)
    loss_trace: list = field(default_factory=list)
    finalized: bool = False


class ExpertStore:
    """Append-only, ordered by task id starting at 1. Old entries are
    never replaced; growth is the only mutation."""

    def __init__(self):
        self._experts = []

    def __len__(self):
        return len(self._experts)

    def __iter__(self):
        return iter(self._experts)

    @property
    def task_ids(self):
        return [e.task_id for e in self._experts]

    @property
    def last(self):
        return self._experts[-1] if self._experts else None

    def add(self, expert):
        if not expert.finalized:
            raise ValueError("only finalized experts can enter the store")
        expected = len(self._experts) + 1
        if expert.task_id != expected:
            raise ValueError(
                f"task ids must stay contiguous: expected {expected}, "
                f"got {expert.task_id}")
        self._experts.append(expert)

    def get(self, task_id):
        idx = int(task_id) - 1
        if not 0 <= idx < len(self._experts):
            raise KeyError(f"no expert for task {task_id}")
        return self._experts[idx]


def new_expert(prev, config, rng, task_id=None):
    """Fresh expert, warm-started from the previous task's weights when
    one exists (bit-equal copy), otherwise freshly initialized."""
    if task_id is None:
        task_id = prev.task_id + 1 if prev is not None else 1
    if prev is None:
        params = vae.init_params(config.vae, rng)
    else:
        if (prev.params.input_dim != config.vae.input_dim
                or prev.params.latent_dim != config.vae.latent_dim):
            raise ValueError(
                "warm start needs matching dimensions: previous expert is "
                f"{prev.params.input_dim}->{prev.params.latent_dim}, config asks "
                f"{config.vae.input_dim}->{config.vae.latent_dim}")
        params = prev.params.copy()
    return TaskExpert(int(task_id), params)


def _floor_signature(task_id, cluster_id, center, tol):
    # last-resort signature for a cluster with no usable covariance at all
    d = center.shape[0]
    return signature.LatentSignature(
        int(task_id), int(cluster_id), center.copy(),
        np.full(d, tol), np.eye(d))


def train_expert(expert, x, config, rng):
    """Train the expert on its task data and freeze it.

    Steps: fit the encoder/decoder, embed the task as posterior means,
    cluster the latents, and extract one signature per cluster (or one
    pooled signature). Returns the same object, finalized.
    """
    if expert.finalized:
        raise FrozenExpertError(
            f"expert for task {expert.task_id} is finalized and cannot be retrained")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError(f"expected nonempty 2-d training data, got shape {x.shape}")
    cfg = config.vae
    expert.params, expert.loss_trace = vae.train(
        expert.params, x, cfg.epochs, cfg.batch_size, cfg.lr, rng,
        momentum=cfg.momentum)

    z = vae.encode_batch(expert.params, x)[0]  # posterior means only
    kmeans_seed = int(rng.integers(2 ** 62))
    expert.kmeans, ids = clustering.kmeans_fit(
        z, config.clusters, max_iter=config.kmeans_iters, seed=kmeans_seed,
        n_init=config.kmeans_inits)

    tol = config.spectrum_tol
    sigs = []
    if config.per_cluster_signatures:
        for c in range(config.clusters):
            members = z[ids == c]
            try:
                sig = signature.extract_signature(members, expert.task_id, c, tol)
            except signature.DegenerateClusterError:
                # singleton cluster: pooled task covariance, own center
                sig = _pooled_with_center(z, expert.task_id, c,
                                          expert.kmeans.centers[c], tol)
            sigs.append(sig)
    else:
        sigs.append(_pooled_with_center(z, expert.task_id, 0,
                                        z.mean(axis=0), tol))
    expert.signatures = sigs
    expert.finalized = True
    return expert


def _pooled_with_center(z, task_id, cluster_id, center, tol):
    if z.shape[0] < 2:
        return _floor_signature(task_id, cluster_id, center, tol)
    pooled = signature.extract_signature(z, task_id, cluster_id, tol)
    return signature.LatentSignature(
        int(task_id), int(cluster_id), np.asarray(center, dtype=np.float64).copy(),
        pooled.eigvals, pooled.eigvecs)


def expert_predict(expert, x):
    """Cluster ids for rows of x under this expert's latent clustering."""
    if not expert.finalized:
        raise ValueError(f"expert for task {expert.task_id} is not trained yet")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    z = vae.encode_batch(expert.params, x)[0]
    return clustering.assign(expert.kmeans, z)


def predict_labels(expert, x, label_map):
    """Class labels via the evaluation-time cluster -> label map."""
    if label_map is None:
        raise ValueError("no label map fitted for this expert")
    return clustering.apply_label_map(label_map, expert_predict(expert, x))
