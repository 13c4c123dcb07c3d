"""Backdoor attacks on graph classifiers and a purification defense.

The package trains GCN/GIN graph classifiers on a small reverse-mode
autodiff engine, plants subgraph-trigger backdoors (fixed, explainer-
placed, learned, or similarity-evading), reverse-engineers a universal
trigger from a backdoored model by embedding-similarity optimization,
and erases the backdoor by distillation-based unlearning guided by
Grad-CAM heatmaps. `run_pipeline` drives the whole cycle across seeds
and writes a deterministic JSON report.
"""

from .attacks import (PoisonSpec, build_attack_set, learned_trigger_attack,
                      poison_dataset, train_adaptive)
from .config import (AttackConfig, DatasetConfig, ExperimentConfig,
                     ModelConfig, TrainingConfig, desk_config, load_config,
                     write_default_toml)
from .errors import ConfigError, GraphPurifyError
from .explain import (NodeMaskExplainer, gnn_explain,
                      grad_cam_heatmap)
from .graphs import (Graph, GraphDataset, TriggerSubgraph,
                     erdos_renyi_subgraph, load_tu_dataset, montage,
                     split_dataset, synthesize_dataset)
from .metrics import accuracy, asr, confusion, similarity_table
from .models import GnnModel, GraphClassifier, train
from .pipeline import run_pipeline, run_seed
from .recovery import RecoveryConfig, TriggerRecoverer, recover_trigger
from .unlearning import BackdoorPurifier, UnlearnConfig, purify

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "BackdoorPurifier", "ConfigError", "DatasetConfig",
    "ExperimentConfig", "GnnModel", "Graph", "GraphClassifier",
    "GraphDataset",
    "GraphPurifyError", "ModelConfig", "NodeMaskExplainer", "PoisonSpec",
    "RecoveryConfig", "TrainingConfig", "TriggerRecoverer", "TriggerSubgraph",
    "UnlearnConfig", "accuracy", "asr", "build_attack_set", "confusion",
    "desk_config", "erdos_renyi_subgraph", "gnn_explain",
    "grad_cam_heatmap", "learned_trigger_attack",
    "load_config", "load_tu_dataset", "montage", "poison_dataset", "purify",
    "recover_trigger", "run_pipeline", "run_seed", "similarity_table",
    "split_dataset", "synthesize_dataset", "train", "train_adaptive",
    "write_default_toml",
]
