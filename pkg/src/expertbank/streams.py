"""Task streams: IDX ingestion and Class-IL / Domain-IL builders.

Class-IL splits a labeled pool into tasks of disjoint class pairs; the
label space grows with every task. Domain-IL keeps the label set fixed and
shifts the input distribution per task (rotation ranges or a fixed pixel
permutation for image sources, a mean drift for the synthetic source).
Every builder is a pure function of (source arrays, parameters, seed).
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from . import numerics

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049

# per-task rotation ranges in degrees; each image draws its own angle
DEFAULT_ROTATION_RANGES = ((0.0, 30.0), (31.0, 60.0), (61.0, 90.0), (91.0, 120.0))


class IdxFormatError(ValueError):
    """Malformed IDX payload (bad magic, truncation, count mismatch)."""


@dataclass
class TaskData:
    task_id: int
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray


def _read_file(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
        rest = fh.read()
    raw = head + rest
    if head == b"\x1f\x8b":  # gzip, handled transparently
        return gzip.decompress(raw)
    return raw


def load_idx(images_path, labels_path):
    """Big-endian IDX pair -> (n x pixels float64 in [0, 1], int labels)."""
    img = _read_file(images_path)
    if len(img) < 16:
        raise IdxFormatError(f"{images_path}: truncated header")
    magic, count, rows, cols = struct.unpack(">llll", img[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise IdxFormatError(f"{images_path}: bad magic {magic}, want {IDX_IMAGE_MAGIC}")
    expected = count * rows * cols
    pixels = np.frombuffer(img, dtype=np.uint8, offset=16)
    if pixels.size < expected:
        raise IdxFormatError(
            f"{images_path}: payload holds {pixels.size} bytes, header promises {expected}")
    x = pixels[:expected].reshape(count, rows * cols).astype(np.float64) / 255.0

    lab = _read_file(labels_path)
    if len(lab) < 8:
        raise IdxFormatError(f"{labels_path}: truncated header")
    lmagic, lcount = struct.unpack(">ll", lab[:8])
    if lmagic != IDX_LABEL_MAGIC:
        raise IdxFormatError(f"{labels_path}: bad magic {lmagic}, want {IDX_LABEL_MAGIC}")
    labels = np.frombuffer(lab, dtype=np.uint8, offset=8)
    if labels.size < lcount:
        raise IdxFormatError(f"{labels_path}: payload holds {labels.size} labels, "
                             f"header promises {lcount}")
    labels = labels[:lcount].astype(np.int64)
    if lcount != count:
        raise IdxFormatError(
            f"image/label count mismatch: {count} images vs {lcount} labels")
    return x, labels


def rotate_images(flat, shape, angles_deg):
    """Rotate each flattened image about its center by its own angle.

    Bilinear interpolation, zeros outside the frame. Positive angles follow
    the usual counterclockwise convention in (row, col) coordinates.
    """
    flat = np.asarray(flat, dtype=np.float64)
    h, w = shape
    if flat.shape[1] != h * w:
        raise ValueError(f"image width {flat.shape[1]} does not match shape {shape}")
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    grid_y, grid_x = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    gy = grid_y.reshape(-1) - cy
    gx = grid_x.reshape(-1) - cx
    out = np.empty_like(flat)
    for i, angle in enumerate(np.broadcast_to(angles_deg, (flat.shape[0],))):
        a = np.deg2rad(angle)
        cos, sin = np.cos(a), np.sin(a)
        # inverse map: rotate output coordinates by -a to find the source
        src_y = cos * gy + sin * gx + cy
        src_x = -sin * gy + cos * gx + cx
        y0 = np.floor(src_y).astype(np.int64)
        x0 = np.floor(src_x).astype(np.int64)
        fy = src_y - y0
        fx = src_x - x0
        img = flat[i].reshape(h, w)
        acc = np.zeros(h * w)
        for dy, dx, wgt in ((0, 0, (1 - fy) * (1 - fx)), (0, 1, (1 - fy) * fx),
                            (1, 0, fy * (1 - fx)), (1, 1, fy * fx)):
            yy = y0 + dy
            xx = x0 + dx
            valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            acc[valid] += wgt[valid] * img[yy[valid], xx[valid]]
        out[i] = acc
    return out


def permute_pixels(flat, permutation):
    permutation = np.asarray(permutation, dtype=np.int64)
    flat = np.asarray(flat, dtype=np.float64)
    if permutation.shape[0] != flat.shape[1]:
        raise ValueError("permutation length does not match pixel count")
    return flat[:, permutation]


def _take_per_class(x, y, classes, per_class_train, per_class_test, rng):
    train_idx, test_idx = [], []
    for c in classes:
        pool = np.flatnonzero(y == c)
        need = per_class_train + per_class_test
        if pool.size < need:
            raise ValueError(
                f"class {c} has {pool.size} samples, need {need}")
        picked = rng.permutation(pool)[:need]
        train_idx.append(picked[:per_class_train])
        test_idx.append(picked[per_class_train:])
    return np.concatenate(train_idx), np.concatenate(test_idx)


def build_class_il(x, y, pairs, n_train_per_class, n_test_per_class, seed,
                   test_pool=None):
    """One task per class tuple; tasks use disjoint classes and, within a
    task, disjoint train/test rows. Rows are shuffled within each task.

    With test_pool=(x2, y2), test rows come from that separate pool (the
    held-out split of the source dataset) instead of the training pool.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    flat = [c for pair in pairs for c in pair]
    if len(set(flat)) != len(flat):
        raise ValueError("class pairs overlap across tasks")
    tasks = []
    for t, pair in enumerate(pairs, start=1):
        rng = numerics.spawn_rng(seed, 101, t)
        if test_pool is None:
            train_idx, test_idx = _take_per_class(
                x, y, pair, n_train_per_class, n_test_per_class, rng)
            test_x, test_y = x, y
        else:
            train_idx, _ = _take_per_class(x, y, pair, n_train_per_class, 0, rng)
            test_x = np.asarray(test_pool[0], dtype=np.float64)
            test_y = np.asarray(test_pool[1], dtype=np.int64)
            test_idx, _ = _take_per_class(test_x, test_y, pair,
                                          n_test_per_class, 0, rng)
        train_idx = rng.permutation(train_idx)
        test_idx = rng.permutation(test_idx)
        tasks.append(TaskData(t, x[train_idx], y[train_idx],
                              test_x[test_idx], test_y[test_idx]))
    return tasks


def build_domain_il(x, y, kind, tasks, n_train_per_task, n_test_per_task, seed,
                    image_shape=(28, 28), rotation_ranges=DEFAULT_ROTATION_RANGES,
                    test_pool=None):
    """Fixed label set, per-task input transform.

    kind="rotated": task t draws each image's angle uniformly from its
    range. kind="permuted": task t applies one fixed pixel permutation to
    all of its images (train and test alike). Every task samples its own
    source rows, so tasks differ in content as well as in transform. With
    test_pool=(x2, y2), test rows come from that held-out pool.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if kind == "rotated" and tasks > len(rotation_ranges):
        raise ValueError(
            f"need {tasks} rotation ranges, have {len(rotation_ranges)}")
    if kind not in ("rotated", "permuted"):
        raise ValueError(f"unknown domain kind: {kind!r}")
    out = []
    for t in range(1, tasks + 1):
        rng = numerics.spawn_rng(seed, 202, t)
        if test_pool is None:
            n_total = n_train_per_task + n_test_per_task
            if x.shape[0] < n_total:
                raise ValueError(f"source has {x.shape[0]} rows, task needs {n_total}")
            picked = rng.permutation(x.shape[0])[:n_total]
            xt, yt = x[picked], y[picked]
        else:
            if x.shape[0] < n_train_per_task:
                raise ValueError(
                    f"source has {x.shape[0]} rows, task needs {n_train_per_task}")
            pool_x = np.asarray(test_pool[0], dtype=np.float64)
            pool_y = np.asarray(test_pool[1], dtype=np.int64)
            if pool_x.shape[0] < n_test_per_task:
                raise ValueError(
                    f"test pool has {pool_x.shape[0]} rows, task needs {n_test_per_task}")
            tr = rng.permutation(x.shape[0])[:n_train_per_task]
            te = rng.permutation(pool_x.shape[0])[:n_test_per_task]
            xt = np.vstack([x[tr], pool_x[te]])
            yt = np.concatenate([y[tr], pool_y[te]])
        if kind == "rotated":
            lo, hi = rotation_ranges[t - 1]
            angles = rng.uniform(lo, hi, size=xt.shape[0])
            xt = rotate_images(xt, image_shape, angles)
        else:
            xt = permute_pixels(xt, rng.permutation(x.shape[1]))
        out.append(TaskData(t, xt[:n_train_per_task], yt[:n_train_per_task],
                            xt[n_train_per_task:], yt[n_train_per_task:]))
    return out


SYNTH_BASE = 0.2          # background level of every synthetic pixel
SYNTH_RADIAL_BASE = 0.1   # radial layout: smallest per-component level


def _synthetic_class_means(n_classes, dim, delta, layout):
    if layout == "axes":
        # class c lights up one axis above the background; classes beyond
        # dim reuse axes at higher levels
        means = np.full((n_classes, dim), SYNTH_BASE)
        for c in range(n_classes):
            level = SYNTH_BASE + delta * (1 + c // dim)
            means[c, c % dim] = min(level, 0.9)
    elif layout == "radial":
        # all means sit on one ray through the origin: direction carries no
        # class (or task) information, only the magnitude along the ray does
        u = np.ones(dim) / np.sqrt(dim)
        means = np.zeros((n_classes, dim))
        for c in range(n_classes):
            radius = SYNTH_RADIAL_BASE * np.sqrt(dim) + (1 + c) * delta
            radius = min(radius, 0.9 * np.sqrt(dim))
            means[c] = radius * u
    else:
        raise ValueError(f"unknown layout: {layout!r}")
    return means


def build_synthetic(scenario, tasks, classes_per_task, dim, separation, seed,
                    n_train_per_task=1000, n_test_per_task=200, drift=0.0,
                    layout="axes", noise=0.05):
    """Gaussian mixture streams in the unit box with a known ground truth.

    Samples are class mean + N(0, noise^2 I), clipped to [0, 1] — the same
    value range as scaled image pixels, which is what the decoder's sigmoid
    output can actually reconstruct. `separation` and `drift` are measured
    in noise units: class means differ by separation * noise along their
    axes, and (Domain-IL) task t's inputs shift by (t-1) * drift * noise
    along a dedicated drift axis (the last one, kept out of the class
    layout when possible).
    """
    if scenario not in ("class_il", "domain_il"):
        raise ValueError(f"unknown scenario: {scenario!r}")
    delta = separation * noise
    if scenario == "class_il":
        means = _synthetic_class_means(tasks * classes_per_task, dim,
                                       delta, layout)
    else:
        means = _synthetic_class_means(classes_per_task, dim, delta, layout)
        drift_axis = np.zeros(dim)
        if layout == "axes" and classes_per_task < dim:
            drift_axis[dim - 1] = 1.0
        else:
            drift_axis[:] = 1.0 / np.sqrt(dim)
    out = []
    counts = (n_train_per_task, n_test_per_task)
    for t in range(1, tasks + 1):
        rng = numerics.spawn_rng(seed, 303, t)
        splits = []
        for n in counts:
            if scenario == "class_il":
                local = rng.integers(classes_per_task, size=n)
                labels = (t - 1) * classes_per_task + local
                xs = means[labels] + noise * rng.standard_normal((n, dim))
            else:
                labels = rng.integers(classes_per_task, size=n)
                xs = (means[labels] + (t - 1) * drift * noise * drift_axis
                      + noise * rng.standard_normal((n, dim)))
            xs = np.clip(xs, 0.0, 1.0)
            splits.append((xs, labels.astype(np.int64)))
        (train_x, train_y), (test_x, test_y) = splits
        out.append(TaskData(t, train_x, train_y, test_x, test_y))
    return out


def default_class_pairs(tasks, classes_per_task=2):
    """0-9 style split: ((0,1), (2,3), ...)."""
    return tuple(
        tuple(range(t * classes_per_task, (t + 1) * classes_per_task))
        for t in range(tasks)
    )


def build_stream(cfg, seed):
    """Dispatch a StreamConfig (see config module) to the right builder."""
    if cfg.dataset == "synthetic":
        return build_synthetic(
            cfg.scenario, cfg.tasks, cfg.classes_per_task, cfg.dim,
            cfg.separation, seed, cfg.n_train_per_task, cfg.n_test_per_task,
            drift=cfg.drift, layout=cfg.layout, noise=cfg.noise)
    if cfg.data_dir is None:
        raise ValueError(f"dataset {cfg.dataset!r} needs data_dir pointing at IDX files")
    x, y = load_idx(os.path.join(cfg.data_dir, cfg.train_images),
                    os.path.join(cfg.data_dir, cfg.train_labels))
    # use the official held-out split for test batches when it is present
    test_pool = None
    test_images = os.path.join(cfg.data_dir, cfg.test_images)
    test_labels = os.path.join(cfg.data_dir, cfg.test_labels)
    if os.path.exists(test_images) and os.path.exists(test_labels):
        test_pool = load_idx(test_images, test_labels)
    if cfg.dataset == "smnist":
        pairs = cfg.class_pairs or default_class_pairs(cfg.tasks, cfg.classes_per_task)
        per_class_train = cfg.n_train_per_task // cfg.classes_per_task
        per_class_test = cfg.n_test_per_task // cfg.classes_per_task
        return build_class_il(x, y, pairs, per_class_train, per_class_test, seed,
                              test_pool=test_pool)
    if cfg.dataset in ("rmnist", "pmnist"):
        kind = "rotated" if cfg.dataset == "rmnist" else "permuted"
        return build_domain_il(x, y, kind, cfg.tasks, cfg.n_train_per_task,
                               cfg.n_test_per_task, seed,
                               rotation_ranges=cfg.rotation_ranges,
                               test_pool=test_pool)
    raise ValueError(f"unknown dataset: {cfg.dataset!r}")
