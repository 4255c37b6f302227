"""Shared victim-model machinery: configs, base class, training helpers."""

from dataclasses import dataclass, field

import numpy as np

from ..diffcore import Tape, Tensor, rng


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss or gradient."""


@dataclass(frozen=True)
class AdvTrainSpec:
    """FGSM augmentation applied to every training batch."""

    train_epsilon: float

    def __post_init__(self):
        if self.train_epsilon < 0:
            raise ValueError(f"train_epsilon must be >= 0, got {self.train_epsilon}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    adversarial: AdvTrainSpec | None = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")


@dataclass
class TrainingReport:
    family: str
    epochs_run: int
    final_loss: float
    train_accuracy: float
    warnings: list = field(default_factory=list)


class UncertaintyModel:
    """Trained victim exposing differentiable raw scores and confidences.

    Subclasses implement ``raw_node`` / ``confidence_node`` on a tape over
    2-D batches; the numpy conveniences below run the same tape path, so
    there is exactly one prediction code path per family.
    """

    family = "abstract"

    def __init__(self, input_dim: int, num_classes: int):
        self.input_dim = input_dim
        self.num_classes = num_classes
        self.training_report: TrainingReport | None = None

    def raw_node(self, tape: Tape, x: Tensor) -> Tensor:
        raise NotImplementedError

    def confidence_node(self, tape: Tape, x: Tensor) -> Tensor:
        raise NotImplementedError

    def parameters(self):
        raise NotImplementedError

    def _check_batch(self, x: Tensor) -> None:
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(
                f"{self.family} expects (n, {self.input_dim}) inputs, got {x.shape}")

    def predict_confidence(self, x: np.ndarray) -> np.ndarray:
        """Normalized class confidences for a sample or a batch."""
        batch, single = _as_batch(x, self.input_dim)
        out = self.confidence_node(Tape(), Tensor(batch)).data
        return out[0] if single else out

    def predict_raw(self, x: np.ndarray) -> np.ndarray:
        """Pre-normalization scores (logits or kernel values)."""
        batch, single = _as_batch(x, self.input_dim)
        out = self.raw_node(Tape(), Tensor(batch)).data
        return out[0] if single else out


def _as_batch(x, input_dim):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
        single = True
    elif arr.ndim == 2:
        single = False
    else:
        raise ValueError(f"expected a sample or batch, got shape {arr.shape}")
    if arr.shape[1] != input_dim:
        raise ValueError(f"input dimension {arr.shape[1]} != model's {input_dim}")
    return arr, single


def evaluate_accuracy(model: UncertaintyModel, features, labels) -> float:
    """Fraction of samples whose argmax confidence matches the label."""
    conf = model.predict_confidence(np.asarray(features))
    return float(np.mean(conf.argmax(axis=1) == np.asarray(labels)))


def epoch_batches(n: int, batch_size: int, shuffle_gen) -> list[np.ndarray]:
    """Index batches for one epoch, shuffled from the given stream."""
    perm = shuffle_gen.permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def shuffle_stream(seed: int):
    return rng.stream(seed, "shuffle")


def init_stream(seed: int):
    return rng.stream(seed, "init")
