"""Deep ensembles: averaged softmax members, optionally FGSM-trained."""

from dataclasses import replace

from ..diffcore import Tape, Tensor, collect_parameters
from .common import TrainConfig, TrainingReport, UncertaintyModel
from .softmax import DEFAULT_HIDDEN, SoftmaxModel, train_softmax


class EnsembleModel(UncertaintyModel):
    """M softmax members; confidence is the arithmetic mean of member
    probability vectors, which is also the exposed raw score."""

    def __init__(self, members, train_epsilon: float | None = None):
        members = list(members)
        if len(members) < 2:
            raise ValueError(f"ensemble needs >= 2 members, got {len(members)}")
        first = members[0]
        for m in members:
            if not isinstance(m, SoftmaxModel):
                raise ValueError("ensemble members must be softmax models")
            if (m.input_dim, m.num_classes) != (first.input_dim, first.num_classes):
                raise ValueError("ensemble members disagree on dimensions")
        super().__init__(first.input_dim, first.num_classes)
        self.members = members
        self.train_epsilon = train_epsilon
        self.family = "ensemble" if train_epsilon is None else "ensemble_adv"

    def confidence_node(self, tape: Tape, x: Tensor) -> Tensor:
        acc = self.members[0].confidence_node(tape, x)
        for m in self.members[1:]:
            acc = tape.add(acc, m.confidence_node(tape, x))
        return tape.scale(acc, 1.0 / len(self.members))

    def raw_node(self, tape: Tape, x: Tensor) -> Tensor:
        # Averaged member probabilities are already the ensemble's scores.
        return self.confidence_node(tape, x)

    def parameters(self):
        return collect_parameters(*(m.parameters() for m in self.members))


def train_ensemble(data, cfg: TrainConfig, members: int = 5,
                   hidden=DEFAULT_HIDDEN) -> EnsembleModel:
    """Train M members from seeds cfg.seed .. cfg.seed + M - 1."""
    if members < 2:
        raise ValueError(f"members must be >= 2, got {members}")
    if cfg.adversarial is not None:
        raise ValueError("use train_ensemble_adversarial for FGSM training")
    return _train(data, cfg, members, hidden, train_epsilon=None)


def train_ensemble_adversarial(data, cfg: TrainConfig, members: int = 5,
                               hidden=DEFAULT_HIDDEN) -> EnsembleModel:
    """Train members on batches augmented with FGSM examples (cfg.adversarial)."""
    if members < 2:
        raise ValueError(f"members must be >= 2, got {members}")
    if cfg.adversarial is None:
        raise ValueError("cfg.adversarial must carry the FGSM training radius")
    return _train(data, cfg, members, hidden,
                  train_epsilon=cfg.adversarial.train_epsilon)


def _train(data, cfg, members, hidden, train_epsilon):
    fitted = []
    for i in range(members):
        member_cfg = replace(cfg, seed=cfg.seed + i)
        fitted.append(train_softmax(data, member_cfg, hidden=hidden))
    model = EnsembleModel(fitted, train_epsilon=train_epsilon)
    model.training_report = TrainingReport(
        family=model.family,
        epochs_run=cfg.epochs,
        final_loss=sum(m.training_report.final_loss for m in fitted) / members,
        train_accuracy=sum(m.training_report.train_accuracy
                           for m in fitted) / members,
    )
    return model
