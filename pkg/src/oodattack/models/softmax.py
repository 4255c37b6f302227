"""Softmax-head baseline victim and its SGD training loop."""

import numpy as np

from ..diffcore import SGD, Parameter, Tape, Tensor, collect_parameters
from .common import (TrainConfig, TrainingDivergedError, TrainingReport,
                     UncertaintyModel, epoch_batches, evaluate_accuracy,
                     init_stream, shuffle_stream)
from .extractor import FeatureExtractor

DEFAULT_HIDDEN = (64, 64)


class SoftmaxModel(UncertaintyModel):
    """Feature extractor plus a linear head; confidence is softmax(logits)."""

    family = "softmax"

    def __init__(self, extractor: FeatureExtractor, num_classes: int, gen):
        super().__init__(extractor.input_dim, num_classes)
        self.extractor = extractor
        h = extractor.output_dim
        self.head_w = Parameter(gen.standard_normal((h, num_classes)) / np.sqrt(h))
        self.head_b = Parameter(np.zeros(num_classes))

    def raw_node(self, tape: Tape, x: Tensor) -> Tensor:
        self._check_batch(x)
        feats = self.extractor.forward(tape, x)
        return tape.add(tape.matmul(feats, self.head_w.value), self.head_b.value)

    def confidence_node(self, tape: Tape, x: Tensor) -> Tensor:
        return tape.softmax(self.raw_node(tape, x))

    def parameters(self):
        return collect_parameters(self.extractor.parameters(),
                                  [self.head_w, self.head_b])


def train_softmax(data, cfg: TrainConfig, hidden=DEFAULT_HIDDEN) -> SoftmaxModel:
    """Fit the baseline by minimizing cross-entropy with momentum SGD.

    Deterministic in (data, cfg): initialization and batch shuffles come
    from streams keyed by cfg.seed. Attaches a TrainingReport with the
    final train accuracy.
    """
    if len(data) == 0:
        raise ValueError("training data is empty")
    gen = init_stream(cfg.seed)
    model = SoftmaxModel(FeatureExtractor(data.dimension, hidden, gen),
                         data.num_classes, gen)
    _fit(model, data, cfg)
    return model


def _fit(model: SoftmaxModel, data, cfg: TrainConfig) -> None:
    """Shared SGD loop for the baseline and for ensemble members.

    With cfg.adversarial set, every batch is augmented with FGSM examples
    crafted at the true labels and the loss is the mean of the clean and
    adversarial halves.
    """
    opt = SGD(model.parameters(), lr=cfg.learning_rate, momentum=cfg.momentum)
    shuffles = shuffle_stream(cfg.seed)
    features, labels = data.features, data.labels
    eps_tr = cfg.adversarial.train_epsilon if cfg.adversarial else None
    lo, hi = data.data_range
    last_loss = float("nan")
    for epoch in range(cfg.epochs):
        try:
            epoch_loss = 0.0
            for idx in epoch_batches(len(data), cfg.batch_size, shuffles):
                xb, yb = features[idx], labels[idx]
                if eps_tr is None:
                    loss, grads = _clean_step(model, xb, yb)
                else:
                    loss, grads = _adversarial_step(model, xb, yb, eps_tr, lo, hi)
                opt.step(grads)
                epoch_loss += loss * len(idx)
            last_loss = epoch_loss / len(data)
        except (ValueError, RuntimeError) as exc:
            raise TrainingDivergedError(
                f"{model.family} training diverged at epoch {epoch}: {exc}") from exc
    model.training_report = TrainingReport(
        family=model.family,
        epochs_run=cfg.epochs,
        final_loss=last_loss,
        train_accuracy=evaluate_accuracy(model, features, labels),
    )


def _clean_step(model, xb, yb):
    tape = Tape()
    conf = model.confidence_node(tape, Tensor(xb))
    loss = tape.cross_entropy_batch(conf, yb)
    return loss.item(), tape.backward(loss)


def _adversarial_step(model, xb, yb, eps_tr, lo, hi):
    x_adv = fgsm_training_batch(model, xb, yb, eps_tr, (lo, hi))
    tape = Tape()
    l_clean = tape.cross_entropy_batch(
        model.confidence_node(tape, Tensor(xb)), yb)
    l_adv = tape.cross_entropy_batch(
        model.confidence_node(tape, Tensor(x_adv)), yb)
    loss = tape.scale(tape.add(l_clean, l_adv), 0.5)
    return loss.item(), tape.backward(loss)


def fgsm_training_batch(model, xb, yb, eps_tr, data_range) -> np.ndarray:
    """One-step sign-gradient examples at the true labels, clamped to range."""
    tape = Tape()
    xt = Tensor(xb)
    loss = tape.cross_entropy_batch(model.confidence_node(tape, xt), yb)
    g = tape.backward(loss)[xt]
    lo, hi = data_range
    return np.clip(xb + eps_tr * np.sign(g), lo, hi)
