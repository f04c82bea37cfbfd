"""Run configuration: dataclasses plus a plain INI loader.

Defaults describe a desk-scale synthetic run that finishes in seconds;
the MNIST-family presets only change counts and the data source. Unknown
keys are rejected so config typos fail loudly instead of silently running
the defaults.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields

from .streams import DEFAULT_ROTATION_RANGES


@dataclass
class StreamConfig:
    scenario: str = "class_il"        # class_il | domain_il
    dataset: str = "synthetic"        # synthetic | smnist | rmnist | pmnist
    data_dir: str | None = None       # directory holding the IDX files
    train_images: str = "train-images-idx3-ubyte.gz"
    train_labels: str = "train-labels-idx1-ubyte.gz"
    test_images: str = "t10k-images-idx3-ubyte.gz"
    test_labels: str = "t10k-labels-idx1-ubyte.gz"
    tasks: int = 5
    classes_per_task: int = 2
    class_pairs: tuple | None = None  # smnist only; default is (0,1),(2,3),...
    n_train_per_task: int = 1000
    n_test_per_task: int = 200
    dim: int = 16                     # synthetic input dimensionality
    separation: float = 6.0           # synthetic class spacing (in noise units)
    drift: float = 0.0                # synthetic domain_il shift (in noise units)
    layout: str = "axes"              # axes | radial
    noise: float = 0.05
    rotation_ranges: tuple = DEFAULT_ROTATION_RANGES

    def __post_init__(self):
        assert self.scenario in ("class_il", "domain_il")
        assert self.dataset in ("synthetic", "smnist", "rmnist", "pmnist")
        assert self.tasks >= 1 and self.classes_per_task >= 1
        if self.dataset == "rmnist" or self.dataset == "pmnist":
            self.scenario = "domain_il"
        if self.dataset == "smnist":
            self.scenario = "class_il"


@dataclass
class RunConfig:
    stream: StreamConfig = field(default_factory=StreamConfig)
    # encoder/decoder
    latent_dim: int = 8
    hidden: tuple = (256, 128)
    beta: float = 4.0
    lr: float = 1e-3
    momentum: float = 0.9
    epochs: int = 40
    batch_size: int = 64
    # latent clustering / signatures
    clusters: int | None = None       # None: one cluster per task class
    kmeans_inits: int = 10
    per_cluster_signatures: bool = True
    spectrum_tol: float = 1e-8
    # regeneration
    gen_n: int = 1000
    struct_threshold: float | None = 0.0
    # routing
    assigner: str = "ce"              # ce | cos
    cos_mode: str = "mean"            # mean | pairwise
    cos_batch: int = 125
    assigner_hidden: int = 128
    assigner_epochs: int = 50
    assigner_lr: float = 1e-3
    # evaluation / bookkeeping
    map_fraction: float = 0.2         # train tail reserved for label maps
    seed: int = 0
    out_dir: str = "runs/out"

    def __post_init__(self):
        assert self.assigner in ("ce", "cos")
        assert self.cos_mode in ("mean", "pairwise")
        assert 0.0 < self.map_fraction < 1.0
        assert self.gen_n >= 1 and self.cos_batch >= 1

    def resolved_clusters(self):
        return self.clusters if self.clusters is not None else self.stream.classes_per_task


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _coerce(raw, like):
    if like is None or isinstance(like, str):
        return raw
    if isinstance(like, bool):
        return _BOOL[raw.strip().lower()]
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    if isinstance(like, tuple):
        return tuple(int(v) if v.strip().lstrip("-").isdigit() else float(v)
                     for v in raw.replace(",", " ").split())
    raise ValueError(f"cannot coerce config value {raw!r}")


_NONE_OK = {"data_dir", "class_pairs", "clusters", "struct_threshold"}
_NONE_TYPES = {"data_dir": str, "class_pairs": tuple, "clusters": int,
               "struct_threshold": float}


def _apply(section, obj, path):
    known = {f.name: f for f in fields(obj)}
    for key, raw in section.items():
        if key not in known:
            raise ValueError(f"{path}: unknown key {key!r} in [{section.name}]")
        if raw.strip().lower() == "none" and key in _NONE_OK:
            setattr(obj, key, None)
            continue
        current = getattr(obj, key)
        if current is None:
            current = _NONE_TYPES[key]()  # type template for optional keys
        if key == "class_pairs":
            pairs = tuple(
                tuple(int(c) for c in chunk.split(","))
                for chunk in raw.split(";") if chunk.strip()
            )
            setattr(obj, key, pairs)
            continue
        if key == "rotation_ranges":
            ranges = tuple(
                tuple(float(c) for c in chunk.split(","))
                for chunk in raw.split(";") if chunk.strip()
            )
            setattr(obj, key, ranges)
            continue
        setattr(obj, key, _coerce(raw, current))


def load_config(path):
    """INI file with [stream], [model], [assigner], [run] sections; every
    key optional, every unknown key an error."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    cfg = RunConfig()
    section_targets = {
        "stream": cfg.stream,
        "model": cfg,
        "assigner": cfg,
        "run": cfg,
    }
    for name in parser.sections():
        if name not in section_targets:
            raise ValueError(f"{path}: unknown section [{name}]")
        _apply(parser[name], section_targets[name], path)
    cfg.stream.__post_init__()
    cfg.__post_init__()
    return cfg
