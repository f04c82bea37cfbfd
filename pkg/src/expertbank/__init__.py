"""Replay-free continual learning with frozen per-task experts.

Each task gets its own lightweight expert (encoder/decoder plus latent
cluster signatures); old tasks are never revisited, and their data is
regenerated from stored signatures whenever a joint model (the task
router) needs it.
"""

from .assigner import (AssignerConfig, AssignerModel, IdentityRouter,
                       SuitabilityReport, suitability, ta_ce_route, train_ta_ce)
from .clustering import (ClusterLabelMap, KMeansModel, apply_label_map, assign,
                         cluster_loss, fit_label_map, kmeans_fit)
from .config import RunConfig, StreamConfig, load_config
from .expert import (ExpertConfig, ExpertStore, FrozenExpertError, TaskExpert,
                     expert_predict, new_expert, predict_labels, train_expert)
from .harness import (EvalReport, RunResult, evaluate, extend, memory_estimate,
                      parse_report, run_continual, emit_report)
from .numerics import (ConvergenceError, SymmetryError, clamp_spectrum,
                       make_rng, spawn_rng, standard_normal, sym_eig)
from .signature import (DegenerateClusterError, GeneratedSet, LatentSignature,
                        extract_signature, generate, sample_structured,
                        struct_loss, whitening_factor)
from .store import ModelStore, StoreFormatError, load_store, save_store
from .streams import (TaskData, build_class_il, build_domain_il, build_stream,
                      build_synthetic, load_idx)
from .vae import (TrainingDivergenceError, VaeConfig, VaeParams, backward,
                  beta_vae_loss, decode, encode, init_params, train)

__version__ = "0.1.0"
