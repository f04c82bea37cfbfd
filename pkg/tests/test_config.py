"""INI config loading: coercion, optional keys, loud rejection of typos."""

import pytest

from expertbank.config import RunConfig, StreamConfig, load_config


def write(tmp_path, text):
    path = tmp_path / "run.ini"
    path.write_text(text)
    return str(path)


def test_defaults_resolve_clusters_from_classes_per_task():
    cfg = RunConfig()
    assert cfg.clusters is None
    assert cfg.resolved_clusters() == cfg.stream.classes_per_task
    cfg = RunConfig(clusters=5)
    assert cfg.resolved_clusters() == 5


def test_dataset_forces_scenario():
    assert StreamConfig(dataset="rmnist", scenario="class_il").scenario == "domain_il"
    assert StreamConfig(dataset="pmnist").scenario == "domain_il"
    assert StreamConfig(dataset="smnist", scenario="domain_il").scenario == "class_il"


def test_ini_types_are_coerced(tmp_path):
    path = write(tmp_path, """
[stream]
dataset = synthetic
scenario = domain_il
tasks = 3
dim = 9
separation = 7.5
drift = 2.0
noise = 0.1

[model]
latent_dim = 5
hidden = 32 16
beta = 0.25
epochs = 15
per_cluster_signatures = false

[assigner]
assigner = cos
cos_batch = 50

[run]
seed = 42
out_dir = /tmp/somewhere
""")
    cfg = load_config(path)
    assert cfg.stream.tasks == 3 and cfg.stream.dim == 9
    assert cfg.stream.separation == 7.5 and cfg.stream.drift == 2.0
    assert cfg.stream.scenario == "domain_il"
    assert cfg.latent_dim == 5 and cfg.hidden == (32, 16)
    assert cfg.beta == 0.25 and cfg.epochs == 15
    assert cfg.per_cluster_signatures is False
    assert cfg.assigner == "cos" and cfg.cos_batch == 50
    assert cfg.seed == 42 and cfg.out_dir == "/tmp/somewhere"


def test_ini_none_values(tmp_path):
    cfg = load_config(write(tmp_path, """
[model]
clusters = none
[run]
struct_threshold = none
"""))
    assert cfg.clusters is None
    assert cfg.struct_threshold is None


def test_ini_optional_values_can_be_set(tmp_path):
    cfg = load_config(write(tmp_path, """
[stream]
data_dir = /data/mnist
class_pairs = 0,1;2,3;4,5
[model]
clusters = 4
"""))
    assert cfg.stream.data_dir == "/data/mnist"
    assert cfg.stream.class_pairs == ((0, 1), (2, 3), (4, 5))
    assert cfg.resolved_clusters() == 4


def test_ini_rotation_ranges(tmp_path):
    cfg = load_config(write(tmp_path, """
[stream]
dataset = rmnist
rotation_ranges = 0,45;46,90
"""))
    assert cfg.stream.rotation_ranges == ((0.0, 45.0), (46.0, 90.0))
    assert cfg.stream.scenario == "domain_il"


def test_unknown_key_is_an_error(tmp_path):
    with pytest.raises(ValueError, match="unknown key 'sepration'"):
        load_config(write(tmp_path, "[stream]\nsepration = 3\n"))


def test_unknown_section_is_an_error(tmp_path):
    with pytest.raises(ValueError, match=r"unknown section \[optimizer\]"):
        load_config(write(tmp_path, "[optimizer]\nlr = 1\n"))


def test_missing_file_is_an_error(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / "absent.ini"))


def test_invalid_values_still_validated(tmp_path):
    with pytest.raises(AssertionError):
        load_config(write(tmp_path, "[assigner]\nassigner = nearest\n"))
