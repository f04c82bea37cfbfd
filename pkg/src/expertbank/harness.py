"""End-to-end continual runs: train the expert bank over a task stream,
regenerate, fit the router, evaluate, and report.

Reports are deterministic functions of (config, seed): wall-clock timings
go to a separate timing.txt sidecar so report.txt can be compared
byte-for-byte across runs.
"""

from __future__ import annotations

import configparser
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import assigner as assigner_mod
from . import clustering, numerics, signature, store as store_mod, streams, vae
from .config import RunConfig
from .expert import ExpertConfig, TaskExpert, new_expert, train_expert
from .store import ModelStore

# sub-stream tags so each pipeline stage draws from its own seed lane
_TAG_EXPERT = 11
_TAG_GEN = 22
_TAG_ASSIGN = 33


@dataclass
class EvalReport:
    task_ids: list
    task_acc: list            # routed accuracy per task
    acc: float                # mean of task_acc
    oracle_task_acc: list     # accuracy with ground-truth routing
    oracle_acc: float
    routing_accuracy: float   # fraction of test samples sent to their task
    assigner_kind: str
    seed: int
    latent_dim: int
    clusters_per_task: int
    generated_per_task: int
    memory_values: int        # predicted signature float count
    memory_bytes: int         # predicted at 4 bytes per value
    memory_bytes_measured: int


@dataclass
class RunResult:
    store: ModelStore
    store_dir: str
    generated: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)


def memory_estimate(latent_dim, tasks, clusters_per_task):
    """Float count and byte cost (4 bytes/value) of all stored signatures:
    per cluster, a mean (d) + spectrum (d) + basis (d^2)."""
    if latent_dim < 1 or tasks < 1 or clusters_per_task < 1:
        raise ValueError("all memory factors must be positive")
    values = (2 * latent_dim + latent_dim ** 2) * tasks * clusters_per_task
    return values, 4 * values


def mapping_split(task, fraction):
    """Tail of the (already shuffled) train rows is reserved to fit the
    evaluation-time cluster -> label maps; experts train on the head."""
    n = task.train_x.shape[0]
    n_map = int(round(n * fraction))
    n_map = min(max(n_map, 1), n - 1)
    fit_x = task.train_x[:n - n_map]
    return fit_x, task.train_x[n - n_map:], task.train_y[n - n_map:]


def _expert_config(cfg, input_dim):
    return ExpertConfig(
        vae=vae.VaeConfig(
            input_dim=input_dim, latent_dim=cfg.latent_dim,
            hidden=tuple(cfg.hidden), beta=cfg.beta, lr=cfg.lr,
            momentum=cfg.momentum, epochs=cfg.epochs, batch_size=cfg.batch_size),
        clusters=cfg.resolved_clusters(),
        kmeans_inits=cfg.kmeans_inits,
        spectrum_tol=cfg.spectrum_tol,
        per_cluster_signatures=cfg.per_cluster_signatures,
    )


def _train_one(model_store, task, cfg, expert_cfg):
    rng = numerics.spawn_rng(cfg.seed, _TAG_EXPERT, task.task_id)
    ex = new_expert(model_store.experts.last, expert_cfg, rng,
                    task_id=task.task_id)
    fit_x, _, _ = mapping_split(task, cfg.map_fraction)
    train_expert(ex, fit_x, expert_cfg, rng)
    model_store.experts.add(ex)
    return ex


def regenerate_all(model_store, cfg):
    """Per-task surrogate datasets from stored signatures; the same seeds
    reproduce the same sets at evaluation time."""
    sets = []
    for task_id in model_store.experts.task_ids:
        rng = numerics.spawn_rng(cfg.seed, _TAG_GEN, task_id)
        sets.append(signature.generate(
            model_store.experts, task_id, cfg.gen_n, rng,
            struct_threshold=cfg.struct_threshold))
    return sets


def _fit_router(model_store, generated, cfg):
    if cfg.assigner == "cos" and len(generated) > 1:
        model_store.router = None
        model_store.assigner_kind = "cos"
        return
    acfg = assigner_mod.AssignerConfig(
        hidden=cfg.assigner_hidden, epochs=cfg.assigner_epochs,
        lr=cfg.assigner_lr)
    router = assigner_mod.train_ta_ce(
        generated, acfg, numerics.spawn_rng(cfg.seed, _TAG_ASSIGN))
    model_store.router = router
    model_store.assigner_kind = (
        "identity" if isinstance(router, assigner_mod.IdentityRouter) else "ce")


def run_continual(cfg):
    """Train one expert per task in stream order, regenerate every task,
    fit the router, and persist the store under cfg.out_dir/store."""
    timings = {}
    t0 = time.perf_counter()
    stream = streams.build_stream(cfg.stream, cfg.seed)
    timings["stream"] = time.perf_counter() - t0

    model_store = ModelStore()
    expert_cfg = _expert_config(cfg, stream[0].train_x.shape[1])
    for task in stream:
        t0 = time.perf_counter()
        _train_one(model_store, task, cfg, expert_cfg)
        timings[f"expert_{task.task_id}"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    generated = regenerate_all(model_store, cfg)
    timings["generate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    _fit_router(model_store, generated, cfg)
    timings["assigner"] = time.perf_counter() - t0

    store_dir = os.path.join(cfg.out_dir, "store")
    store_mod.save_store(model_store, store_dir)
    write_timings(timings, os.path.join(cfg.out_dir, "timing.txt"))
    return RunResult(model_store, store_dir, generated, timings)


def extend(model_store, new_task, cfg):
    """Grow a trained store by one task: train its expert (warm start from
    the last one), then refit the router on regenerated sets for every
    task. Existing experts are not touched."""
    expected = len(model_store.experts) + 1
    if new_task.task_id != expected:
        raise ValueError(
            f"extend expects task {expected}, got {new_task.task_id}")
    expert_cfg = _expert_config(cfg, new_task.train_x.shape[1])
    _train_one(model_store, new_task, cfg, expert_cfg)
    generated = regenerate_all(model_store, cfg)
    _fit_router(model_store, generated, cfg)
    return model_store


def _route_samples(model_store, generated_by_task, x, cfg):
    """Routed task id per row of x."""
    kind = model_store.assigner_kind
    if kind == "identity":
        return np.full(x.shape[0], model_store.router.task_id, dtype=np.int64)
    if kind == "ce":
        return assigner_mod.ta_ce_route(model_store.router, x)
    routed = np.empty(x.shape[0], dtype=np.int64)
    for start in range(0, x.shape[0], cfg.cos_batch):
        batch = x[start:start + cfg.cos_batch]
        report = assigner_mod.suitability(generated_by_task, batch,
                                          mode=cfg.cos_mode)
        routed[start:start + cfg.cos_batch] = report.chosen
    return routed


def evaluate(model_store, stream, cfg):
    """Routed and oracle accuracy over a task stream.

    Label maps are fitted per task from held-back mapping rows (never used
    for expert training); test samples are routed without task identity,
    then labeled by the routed expert's map.
    """
    if len(model_store.experts) == 0:
        raise ValueError("store holds no experts")
    by_task = {t.task_id: t for t in stream}
    label_maps = {}
    for task_id in model_store.experts.task_ids:
        task = by_task.get(task_id)
        if task is None:
            raise ValueError(f"stream is missing task {task_id}")
        ex = model_store.experts.get(task_id)
        _, map_x, map_y = mapping_split(task, cfg.map_fraction)
        z = vae.encode_batch(ex.params, map_x)[0]
        label_maps[task_id] = clustering.fit_label_map(ex.kmeans, z, map_y)

    generated_by_task = None
    if model_store.assigner_kind == "cos":
        generated_by_task = {
            g.task_id: g.data for g in regenerate_all(model_store, cfg)}

    task_ids = model_store.experts.task_ids
    task_acc, oracle_acc = [], []
    routed_right = 0
    total = 0
    for task_id in task_ids:
        task = by_task[task_id]
        x, y = task.test_x, task.test_y
        routed = _route_samples(model_store, generated_by_task, x, cfg)
        routed_right += int(np.sum(routed == task_id))
        total += x.shape[0]

        predicted = np.empty(x.shape[0], dtype=np.int64)
        for target in np.unique(routed):
            ex = model_store.experts.get(int(target))
            rows = routed == target
            z = vae.encode_batch(ex.params, x[rows])[0]
            ids = clustering.assign(ex.kmeans, z)
            predicted[rows] = clustering.apply_label_map(label_maps[int(target)], ids)
        task_acc.append(float(np.mean(predicted == y)))

        ex = model_store.experts.get(task_id)
        z = vae.encode_batch(ex.params, x)[0]
        ids = clustering.assign(ex.kmeans, z)
        oracle_pred = clustering.apply_label_map(label_maps[task_id], ids)
        oracle_acc.append(float(np.mean(oracle_pred == y)))

    values, pred_bytes = memory_estimate(
        model_store.latent_dim, len(task_ids), model_store.clusters_per_task)
    return EvalReport(
        task_ids=list(task_ids),
        task_acc=task_acc,
        acc=float(np.mean(task_acc)),
        oracle_task_acc=oracle_acc,
        oracle_acc=float(np.mean(oracle_acc)),
        routing_accuracy=float(routed_right / total),
        assigner_kind=model_store.assigner_kind,
        seed=cfg.seed,
        latent_dim=model_store.latent_dim,
        clusters_per_task=model_store.clusters_per_task,
        generated_per_task=cfg.gen_n,
        memory_values=values,
        memory_bytes=pred_bytes,
        memory_bytes_measured=model_store.signature_bytes,
    )


def emit_report(report, path):
    """Deterministic INI-style report; floats use repr so parsing them
    back reproduces the exact values."""
    parser = configparser.ConfigParser()
    parser["run"] = {
        "seed": str(report.seed),
        "assigner": report.assigner_kind,
        "tasks": str(len(report.task_ids)),
        "latent_dim": str(report.latent_dim),
        "clusters_per_task": str(report.clusters_per_task),
        "generated_per_task": str(report.generated_per_task),
    }
    acc = {
        "acc": repr(report.acc),
        "oracle_acc": repr(report.oracle_acc),
        "routing_accuracy": repr(report.routing_accuracy),
    }
    for t, a, o in zip(report.task_ids, report.task_acc, report.oracle_task_acc):
        acc[f"task_acc_{t}"] = repr(a)
        acc[f"oracle_task_acc_{t}"] = repr(o)
    parser["accuracy"] = acc
    parser["memory"] = {
        "signature_values": str(report.memory_values),
        "predicted_bytes": str(report.memory_bytes),
        "measured_bytes": str(report.memory_bytes_measured),
        "megabytes": repr(report.memory_bytes / 1e6),
    }
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        parser.write(fh)
    return path


def parse_report(path):
    """Report file -> nested dict of section -> key -> parsed value."""
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise FileNotFoundError(path)
    out = {}
    for section in parser.sections():
        sec = {}
        for key, raw in parser[section].items():
            try:
                sec[key] = int(raw)
            except ValueError:
                try:
                    sec[key] = float(raw)
                except ValueError:
                    sec[key] = raw
        out[section] = sec
    return out


def write_timings(timings, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        for name, seconds in timings.items():
            fh.write(f"{name} {seconds:.3f}\n")
        fh.write(f"total {sum(timings.values()):.3f}\n")
