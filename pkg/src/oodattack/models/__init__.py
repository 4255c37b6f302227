"""Victim uncertainty-estimation model families."""

from .common import (AdvTrainSpec, TrainConfig, TrainingDivergedError,
                     TrainingReport, UncertaintyModel, evaluate_accuracy)
from .duq import DUQModel, train_duq
from .ensemble import EnsembleModel, train_ensemble, train_ensemble_adversarial
from .extractor import FeatureExtractor
from .rffgp import MEAN_FIELD_LAMBDA, RFFGPModel, train_rffgp
from .softmax import (DEFAULT_HIDDEN, SoftmaxModel, fgsm_training_batch,
                      train_softmax)

__all__ = [
    "AdvTrainSpec",
    "DEFAULT_HIDDEN",
    "DUQModel",
    "EnsembleModel",
    "FeatureExtractor",
    "MEAN_FIELD_LAMBDA",
    "RFFGPModel",
    "SoftmaxModel",
    "TrainConfig",
    "TrainingDivergedError",
    "TrainingReport",
    "UncertaintyModel",
    "evaluate_accuracy",
    "fgsm_training_batch",
    "train_duq",
    "train_ensemble",
    "train_ensemble_adversarial",
    "train_rffgp",
    "train_softmax",
]
