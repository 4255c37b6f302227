"""Random-feature Gaussian-process head with a Laplace-fit precision.

A frozen random cosine feature map approximates an RBF kernel over the
extractor features; class weights on top are trained by cross-entropy,
and a single accumulation pass then fits a precision matrix whose inverse
gives a closed-form predictive variance. Confidence folds that variance
into the logits through the standard mean-field scaling, so predictions
far from the training data relax toward uniform.
"""

import numpy as np

from ..diffcore import SGD, Parameter, Tape, Tensor, collect_parameters
from .common import (TrainConfig, TrainingDivergedError, TrainingReport,
                     UncertaintyModel, epoch_batches, evaluate_accuracy,
                     init_stream, shuffle_stream)
from .extractor import FeatureExtractor
from .softmax import DEFAULT_HIDDEN

MEAN_FIELD_LAMBDA = np.pi / 8.0


class RFFGPModel(UncertaintyModel):
    """Extractor -> frozen cosine features -> linear class weights, plus a
    precision matrix fit after training for the predictive variance."""

    family = "rffgp"

    def __init__(self, extractor: FeatureExtractor, num_classes: int,
                 num_features: int, lengthscale: float, gen,
                 mean_field: float = MEAN_FIELD_LAMBDA):
        super().__init__(extractor.input_dim, num_classes)
        if num_features < num_classes:
            raise ValueError(
                f"num_features {num_features} < num_classes {num_classes}")
        if lengthscale <= 0:
            raise ValueError(f"lengthscale must be > 0, got {lengthscale}")
        self.extractor = extractor
        self.num_features = num_features
        self.lengthscale = lengthscale
        self.mean_field = mean_field
        h = extractor.output_dim
        self.omega = Parameter(
            gen.standard_normal((h, num_features)) / lengthscale, trainable=False)
        self.phase = Parameter(
            gen.uniform(0.0, 2.0 * np.pi, num_features), trainable=False)
        self.beta = Parameter(
            gen.standard_normal((num_features, num_classes)) / np.sqrt(num_features))
        self.precision = np.eye(num_features)
        self.precision_inv = np.eye(num_features)

    def features_node(self, tape: Tape, x: Tensor) -> Tensor:
        """sqrt(2/m) cos(f(x) Omega + phase); Omega and phase stay frozen."""
        self._check_batch(x)
        feats = self.extractor.forward(tape, x)
        proj = tape.add(tape.matmul(feats, self.omega.value), self.phase.value)
        return tape.scale(tape.cos(proj), np.sqrt(2.0 / self.num_features))

    def logits_node(self, tape: Tape, phi: Tensor) -> Tensor:
        return tape.matmul(phi, self.beta.value)

    def variance_node(self, tape: Tape, phi: Tensor) -> Tensor:
        """Predictive variance per row: phi P^-1 phi^T."""
        weighted = tape.matmul(phi, Tensor(self.precision_inv))
        return tape.sum_rows(tape.mul(weighted, phi))

    def raw_node(self, tape: Tape, x: Tensor) -> Tensor:
        """Variance-adjusted logits: logits / sqrt(1 + lambda * variance)."""
        phi = self.features_node(tape, x)
        logits = self.logits_node(tape, phi)
        variance = self.variance_node(tape, phi)
        factor = tape.rsqrt(tape.affine(variance, self.mean_field, 1.0))
        return tape.scale_rows(logits, factor)

    def confidence_node(self, tape: Tape, x: Tensor) -> Tensor:
        return tape.softmax(self.raw_node(tape, x))

    def parameters(self):
        return collect_parameters(self.extractor.parameters(),
                                  [self.omega, self.phase, self.beta])

    def predict_variance(self, x: np.ndarray) -> np.ndarray:
        arr = np.asarray(x, dtype=np.float64)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        tape = Tape()
        out = self.variance_node(tape, self.features_node(tape, Tensor(arr))).data
        return out[0] if single else out

    def fit_precision(self, features: np.ndarray, batch_size: int = 256) -> None:
        """Accumulate P = I + sum_x p(1-p) phi phi^T over the training set,
        with p the max class probability of the plain (unadjusted) softmax.
        """
        m = self.num_features
        precision = np.eye(m)
        features = np.asarray(features, dtype=np.float64)
        for start in range(0, len(features), batch_size):
            batch = features[start:start + batch_size]
            tape = Tape()
            phi_t = self.features_node(tape, Tensor(batch))
            probs = tape.softmax(self.logits_node(tape, phi_t)).data
            phi = phi_t.data
            p = probs.max(axis=1)
            w = p * (1.0 - p)
            precision += (phi * w[:, None]).T @ phi
        precision = 0.5 * (precision + precision.T)
        inv = np.linalg.inv(precision)
        self.precision = precision
        self.precision_inv = 0.5 * (inv + inv.T)


def train_rffgp(data, cfg: TrainConfig, num_features: int = 256,
                lengthscale: float = 1.0, hidden=DEFAULT_HIDDEN) -> RFFGPModel:
    """Two stages: cross-entropy SGD on the plain feature logits, then a
    single deterministic pass fitting the Laplace precision."""
    if len(data) == 0:
        raise ValueError("training data is empty")
    if num_features < data.num_classes:
        raise ValueError("num_features must be >= the class count")
    gen = init_stream(cfg.seed)
    model = RFFGPModel(FeatureExtractor(data.dimension, hidden, gen),
                       data.num_classes, num_features, lengthscale, gen)
    opt = SGD(model.parameters(), lr=cfg.learning_rate, momentum=cfg.momentum)
    shuffles = shuffle_stream(cfg.seed)
    features, labels = data.features, data.labels
    last_loss = float("nan")
    for epoch in range(cfg.epochs):
        try:
            epoch_loss = 0.0
            for idx in epoch_batches(len(data), cfg.batch_size, shuffles):
                tape = Tape()
                phi = model.features_node(tape, Tensor(features[idx]))
                conf = tape.softmax(model.logits_node(tape, phi))
                loss = tape.cross_entropy_batch(conf, labels[idx])
                opt.step(tape.backward(loss))
                epoch_loss += loss.item() * len(idx)
            last_loss = epoch_loss / len(data)
        except (ValueError, RuntimeError) as exc:
            raise TrainingDivergedError(
                f"rffgp training diverged at epoch {epoch}: {exc}") from exc
    model.fit_precision(features)
    model.training_report = TrainingReport(
        family=model.family,
        epochs_run=cfg.epochs,
        final_loss=last_loss,
        train_accuracy=evaluate_accuracy(model, features, labels),
    )
    return model
