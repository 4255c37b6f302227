"""RBF-centroid uncertainty head with EMA-maintained class centroids."""

import numpy as np

from ..diffcore import SGD, Parameter, Tape, Tensor, collect_parameters
from .common import (TrainConfig, TrainingDivergedError, TrainingReport,
                     UncertaintyModel, epoch_batches, evaluate_accuracy,
                     init_stream, shuffle_stream)
from .extractor import FeatureExtractor
from .softmax import DEFAULT_HIDDEN

CENTROID_COLLAPSE_TOL = 1e-6


class DUQModel(UncertaintyModel):
    """Per-class projection + centroid; the class score is an RBF kernel
    between the projected embedding and the centroid.

    Scores are K_c = exp(-d_c^2 / (2 sigma^2)) in (0, 1]. Normalizing them
    by their sum equals a softmax over the kernel exponents, and the
    confidence path computes it that way so that samples far from every
    centroid cannot underflow to a 0/0.
    """

    family = "duq"

    def __init__(self, extractor: FeatureExtractor, num_classes: int,
                 embed_dim: int, sigma: float, gamma: float, gen):
        super().__init__(extractor.input_dim, num_classes)
        if sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {sigma}")
        if not 0 < gamma <= 1:
            raise ValueError(f"gamma must be in (0, 1], got {gamma}")
        self.extractor = extractor
        self.embed_dim = embed_dim
        self.sigma = sigma
        self.gamma = gamma
        h = extractor.output_dim
        self.projections = [
            Parameter(gen.standard_normal((h, embed_dim)) / np.sqrt(h))
            for _ in range(num_classes)
        ]
        self.centroids = [
            Parameter(gen.standard_normal(embed_dim), trainable=False)
            for _ in range(num_classes)
        ]

    def kernel_exponents_node(self, tape: Tape, x: Tensor) -> Tensor:
        """Per-class -d_c^2 / (2 sigma^2); exp of this is the kernel score."""
        self._check_batch(x)
        feats = self.extractor.forward(tape, x)
        scale = -0.5 / (self.sigma * self.sigma)
        cols = []
        for w, e in zip(self.projections, self.centroids):
            emb = tape.matmul(feats, w.value)
            cols.append(tape.scale(tape.sqdist_rows(emb, e.value), scale))
        return tape.stack_cols(cols)

    def raw_node(self, tape: Tape, x: Tensor) -> Tensor:
        return tape.exp(self.kernel_exponents_node(tape, x))

    def confidence_node(self, tape: Tape, x: Tensor) -> Tensor:
        return tape.softmax(self.kernel_exponents_node(tape, x))

    def parameters(self):
        return collect_parameters(self.extractor.parameters(),
                                  self.projections, self.centroids)

    def class_embeddings(self, features: np.ndarray) -> list[np.ndarray]:
        """Projected embeddings of a batch under each class projection."""
        feats = self.extractor.forward(Tape(), Tensor(features)).data
        return [feats @ w.value.data for w in self.projections]

    def centroid_update(self, features, labels, gamma: float | None = None) -> None:
        """EMA step e_c <- (1-gamma) e_c + gamma * batch class mean.

        Uses the weights current at call time; classes absent from the
        batch keep their centroid.
        """
        gamma = self.gamma if gamma is None else gamma
        labels = np.asarray(labels)
        embeddings = self.class_embeddings(np.asarray(features, dtype=np.float64))
        for c in range(self.num_classes):
            mask = labels == c
            if not mask.any():
                continue
            batch_mean = embeddings[c][mask].mean(axis=0)
            old = self.centroids[c].value.data
            self.centroids[c].assign((1.0 - gamma) * old + gamma * batch_mean)

    def min_centroid_distance(self) -> float:
        e = np.stack([c.value.data for c in self.centroids])
        dists = np.linalg.norm(e[:, None, :] - e[None, :, :], axis=2)
        return float(dists[~np.eye(len(e), dtype=bool)].min())


def train_duq(data, cfg: TrainConfig, embed_dim: int = 16, sigma: float = 0.5,
              gamma: float = 0.5, hidden=DEFAULT_HIDDEN) -> DUQModel:
    """Fit the RBF head: binary cross-entropy between per-class kernel
    scores and the one-hot target, centroids tracked by EMA (no gradient).
    """
    if len(data) == 0:
        raise ValueError("training data is empty")
    gen = init_stream(cfg.seed)
    model = DUQModel(FeatureExtractor(data.dimension, hidden, gen),
                     data.num_classes, embed_dim, sigma, gamma, gen)
    opt = SGD(model.parameters(), lr=cfg.learning_rate, momentum=cfg.momentum)
    shuffles = shuffle_stream(cfg.seed)
    features, labels = data.features, data.labels
    one_hot = np.eye(data.num_classes)[labels]
    last_loss = float("nan")
    for epoch in range(cfg.epochs):
        try:
            epoch_loss = 0.0
            for idx in epoch_batches(len(data), cfg.batch_size, shuffles):
                loss, grads = _bce_step(model, features[idx], labels[idx],
                                        one_hot[idx])
                opt.step(grads)
                model.centroid_update(features[idx], labels[idx])
                epoch_loss += loss * len(idx)
            last_loss = epoch_loss / len(data)
        except (ValueError, RuntimeError) as exc:
            raise TrainingDivergedError(
                f"duq training diverged at epoch {epoch}: {exc}") from exc
    warnings = []
    if cfg.epochs > 0 and model.min_centroid_distance() < CENTROID_COLLAPSE_TOL:
        warnings.append(
            f"centroids collapsed: min pairwise distance "
            f"{model.min_centroid_distance():.3e} < {CENTROID_COLLAPSE_TOL}")
    model.training_report = TrainingReport(
        family=model.family,
        epochs_run=cfg.epochs,
        final_loss=last_loss,
        train_accuracy=evaluate_accuracy(model, features, labels),
        warnings=warnings,
    )
    return model


def _bce_step(model, xb, yb, tb):
    """Sum over classes of BCE(K_c, one-hot), averaged over the batch.

    The positive term uses the kernel exponent directly (it equals
    log K_c exactly), keeping gradients alive however far the embedding
    sits from the centroid.
    """
    tape = Tape()
    exponents = model.kernel_exponents_node(tape, Tensor(xb))
    scores = tape.exp(exponents)
    target = Tensor(tb)
    complement = Tensor(1.0 - tb)
    hit = tape.mul(target, exponents)
    miss = tape.mul(complement, tape.log(tape.one_minus(scores)))
    loss = tape.scale(tape.sum(tape.add(hit, miss)), -1.0 / len(xb))
    return loss.item(), tape.backward(loss)
