"""Experiment orchestration: configs, checkpoints, pipeline, CLI."""

from .checkpoint import (CHECKPOINT_VERSION, CheckpointError, load_checkpoint,
                         save_checkpoint)
from .config import (ConfigError, ExperimentConfig, FilesSpec, config_from_dict,
                     config_hash, config_to_dict, default_config, load_config)
from .experiment import (ConfidenceHistogram, ExperimentError, ReportTable,
                         attack_out_domain, build_datasets,
                         emit_confidence_histogram, get_or_train,
                         run_experiment, sweep_epsilon,
                         sweep_monotone_families, train_family)

__all__ = [
    "CHECKPOINT_VERSION",
    "CheckpointError",
    "ConfidenceHistogram",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentError",
    "FilesSpec",
    "ReportTable",
    "attack_out_domain",
    "build_datasets",
    "config_from_dict",
    "config_hash",
    "config_to_dict",
    "default_config",
    "emit_confidence_histogram",
    "get_or_train",
    "load_checkpoint",
    "load_config",
    "run_experiment",
    "save_checkpoint",
    "sweep_epsilon",
    "sweep_monotone_families",
    "train_family",
]
