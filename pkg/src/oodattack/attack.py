"""Untargeted perturbation of out-domain samples toward high confidence.

The loop repeatedly takes the victim's own argmax prediction as the
attacked label, descends the cross-entropy toward it by a signed input
gradient step, and projects back into the L-infinity ball around the
original sample (then into the data range). A single step with step size
equal to the radius is the one-shot variant.
"""

from dataclasses import dataclass, field

import numpy as np

from .diffcore import Tape, Tensor

CONSTRAINT_TOL = 1e-9


class AttackError(RuntimeError):
    """Attack could not proceed (non-finite loss or gradient)."""


@dataclass(frozen=True)
class AttackConfig:
    """Perturbation budget: radius, iteration count, step size, valid range.

    ``step_size=None`` resolves to epsilon / 4.
    """

    epsilon: float
    iterations: int
    data_range: tuple[float, float]
    step_size: float | None = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        lo, hi = self.data_range
        if not lo < hi:
            raise ValueError(f"invalid data range [{lo}, {hi}]")

    @property
    def effective_step(self) -> float:
        return self.epsilon / 4.0 if self.step_size is None else self.step_size


@dataclass(frozen=True)
class AttackResult:
    """Perturbed sample plus the label and loss trace that produced it."""

    x_adv: np.ndarray
    delta: np.ndarray
    label: int
    loss_trace: tuple[float, ...] = field(default_factory=tuple)


def closest_label(model, x: np.ndarray) -> int:
    """The victim's argmax class on x; ties resolve to the lowest index."""
    return int(np.argmax(model.predict_confidence(x)))


def surrogate_loss(model, x: np.ndarray, label: int) -> float:
    """Cross-entropy of the model's confidence toward the attacked label."""
    value, _ = surrogate_gradient(model, x, label)
    return value


def surrogate_gradient(model, x: np.ndarray, label: int):
    """Surrogate loss and its gradient with respect to the input sample."""
    if not 0 <= label < model.num_classes:
        raise ValueError(f"label {label} outside [0, {model.num_classes})")
    x = np.asarray(x, dtype=np.float64)
    tape = Tape()
    xt = Tensor(x[None, :])
    conf = model.confidence_node(tape, xt)
    loss = tape.cross_entropy_batch(conf, np.array([label]))
    grad = tape.backward(loss)[xt][0]
    return loss.item(), grad


def project_linf(candidate: np.ndarray, origin: np.ndarray, epsilon: float,
                 data_range) -> np.ndarray:
    """Clamp candidate into the epsilon ball around origin, then into range."""
    candidate = np.asarray(candidate, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64)
    if candidate.shape != origin.shape:
        raise ValueError(f"shape mismatch: {candidate.shape} vs {origin.shape}")
    lo, hi = data_range
    delta = np.clip(candidate - origin, -epsilon, epsilon)
    return np.clip(origin + delta, lo, hi)


def perturb(model, x: np.ndarray, cfg: AttackConfig) -> AttackResult:
    """Run the full iterated attack on one sample.

    Each of the cfg.iterations gradient steps refreshes the attacked label
    from the current iterate before descending. Deterministic in
    (model, x, cfg).
    """
    x = np.asarray(x, dtype=np.float64)
    x_adv = x.copy()
    step = cfg.effective_step
    lo_hi = cfg.data_range
    trace = []
    label = closest_label(model, x_adv)
    for k in range(cfg.iterations):
        label = closest_label(model, x_adv)
        loss, grad = surrogate_gradient(model, x_adv, label)
        if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
            raise AttackError(f"non-finite loss or gradient at iteration {k}")
        trace.append(loss)
        x_adv = project_linf(x_adv - step * np.sign(grad), x, cfg.epsilon, lo_hi)
    result = AttackResult(x_adv=x_adv, delta=x_adv - x, label=label,
                          loss_trace=tuple(trace))
    check_constraint(x, result.x_adv, cfg)
    return result


def fgsm(model, x: np.ndarray, epsilon: float, data_range) -> AttackResult:
    """Single-step variant: exactly perturb with K=1 and step size epsilon."""
    cfg = AttackConfig(epsilon=epsilon, iterations=1, data_range=data_range,
                       step_size=epsilon if epsilon > 0 else None)
    return perturb(model, x, cfg)


def check_constraint(x: np.ndarray, x_adv: np.ndarray, cfg: AttackConfig) -> None:
    """Verify the perturbation budget; raises on any violation."""
    delta = np.asarray(x_adv) - np.asarray(x)
    worst = float(np.abs(delta).max()) if delta.size else 0.0
    if worst > cfg.epsilon + CONSTRAINT_TOL:
        raise AttackError(
            f"perturbation {worst} exceeds radius {cfg.epsilon}")
    lo, hi = cfg.data_range
    if np.asarray(x_adv).min() < lo or np.asarray(x_adv).max() > hi:
        raise AttackError(
            f"adversarial sample leaves data range [{lo}, {hi}]")
