"""Test-time task routing.

Two interchangeable routers over the per-task generated sets:

* a softmax classifier (one hidden tanh layer) trained with cross-entropy
  on pseudo task labels — samples carry the id of the task that generated
  them, no class labels involved;
* a training-free cosine-suitability rule that scores each task's
  generated set against a whole test batch and picks the argmax.

A single-task stream has nothing to route; callers get an IdentityRouter
and a warning instead of a degenerate classifier.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import numerics


@dataclass
class AssignerConfig:
    hidden: int = 128
    epochs: int = 50
    lr: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 64


@dataclass
class AssignerModel:
    """input -> tanh(hidden) -> softmax over tasks, in task_ids order."""
    task_ids: list
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class IdentityRouter:
    task_id: int


@dataclass
class SuitabilityReport:
    task_ids: list
    scores: np.ndarray
    chosen: int


def softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(probs, targets):
    """Mean negative log-probability of the target column."""
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    picked = probs[np.arange(probs.shape[0]), targets]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def predict_proba(model, x):
    x = np.asarray(x, dtype=np.float64)
    h = np.tanh(x @ model.w1 + model.b1)
    return softmax(h @ model.w2 + model.b2)


def train_ta_ce(generated_sets, config, rng):
    """Fit the softmax router on the union of generated sets.

    Pseudo labels are positions in the task-id-sorted order, so routing is
    invariant to the order sets are handed in.
    """
    if len(generated_sets) == 0:
        raise ValueError("no generated sets to train on")
    sets = sorted(generated_sets, key=lambda s: s.task_id)
    if len(sets) == 1:
        warnings.warn("single task: routing degenerates to the identity")
        return IdentityRouter(sets[0].task_id)
    task_ids = [s.task_id for s in sets]
    if len(set(task_ids)) != len(task_ids):
        raise ValueError("duplicate task ids in generated sets")
    x = np.vstack([s.data for s in sets])
    y = np.concatenate([np.full(s.data.shape[0], i) for i, s in enumerate(sets)])

    dim, k = x.shape[1], len(sets)
    bound1 = 1.0 / np.sqrt(dim)
    bound2 = 1.0 / np.sqrt(config.hidden)
    model = AssignerModel(
        task_ids,
        rng.uniform(-bound1, bound1, size=(dim, config.hidden)),
        np.zeros(config.hidden),
        rng.uniform(-bound2, bound2, size=(config.hidden, k)),
        np.zeros(k),
    )
    velocity = [np.zeros_like(a) for a in (model.w1, model.b1, model.w2, model.b2)]
    n = x.shape[0]
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = x[idx], y[idx]
            h = np.tanh(xb @ model.w1 + model.b1)
            probs = softmax(h @ model.w2 + model.b2)
            delta2 = probs.copy()
            delta2[np.arange(len(yb)), yb] -= 1.0
            delta2 /= len(yb)
            grads = [None] * 4
            grads[2] = h.T @ delta2
            grads[3] = delta2.sum(axis=0)
            delta1 = (delta2 @ model.w2.T) * (1.0 - h ** 2)
            grads[0] = xb.T @ delta1
            grads[1] = delta1.sum(axis=0)
            arrays = [model.w1, model.b1, model.w2, model.b2]
            for vel, arr, g in zip(velocity, arrays, grads):
                vel *= config.momentum
                vel -= config.lr * g
                arr += vel
    return model


def ta_ce_route(model, x):
    """Task id per row of x."""
    x = np.asarray(x, dtype=np.float64)
    if isinstance(model, IdentityRouter):
        return np.full(x.shape[0], model.task_id, dtype=np.int64)
    probs = predict_proba(model, x)
    ids = np.asarray(model.task_ids, dtype=np.int64)
    return ids[probs.argmax(axis=1)]


def _cos_against_batch(reference_rows, test_batch, mode):
    """Summed cosine similarity between a task's generated rows and a test
    batch. Zero-norm rows contribute zero."""
    test_norms = np.linalg.norm(test_batch, axis=1)
    safe_test = test_norms > 0
    if mode == "mean":
        center = reference_rows.mean(axis=0)
        norm = np.linalg.norm(center)
        if norm == 0.0:
            return 0.0
        sims = (test_batch[safe_test] @ center) / (test_norms[safe_test] * norm)
        return float(sims.sum())
    if mode == "pairwise":
        ref_norms = np.linalg.norm(reference_rows, axis=1)
        safe_ref = ref_norms > 0
        if not safe_ref.any() or not safe_test.any():
            return 0.0
        ref = reference_rows[safe_ref] / ref_norms[safe_ref, None]
        tst = test_batch[safe_test] / test_norms[safe_test, None]
        # average over reference rows, sum over the batch
        return float((ref @ tst.T).sum() / ref.shape[0])
    raise ValueError(f"unknown cosine mode: {mode!r}")


def suitability(generated_by_task, test_batch, mode="mean"):
    """Score every task's generated set against one test batch and pick the
    argmax; ties break toward the lowest task id."""
    if not generated_by_task:
        raise ValueError("no generated sets to score against")
    test_batch = np.asarray(test_batch, dtype=np.float64)
    if test_batch.ndim != 2 or test_batch.shape[0] == 0:
        raise ValueError(f"expected a nonempty 2-d test batch, got {test_batch.shape}")
    task_ids = sorted(generated_by_task)
    scores = np.array([
        _cos_against_batch(np.asarray(generated_by_task[t], dtype=np.float64),
                           test_batch, mode)
        for t in task_ids
    ])
    return SuitabilityReport(task_ids, scores, task_ids[int(scores.argmax())])
