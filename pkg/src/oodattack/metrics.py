"""Uncertainty metrics over batches of confidence vectors.

Entropy is reported in nats; a sample is accepted when its maximum
confidence reaches the threshold (max >= tau), so the rejection rate
counts strict shortfalls. Batches failing distribution validation are
rejected loudly rather than renormalized.
"""

from dataclasses import dataclass

import numpy as np

DISTRIBUTION_TOL = 1e-6


@dataclass(frozen=True)
class MetricsConfig:
    tau: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")


@dataclass(frozen=True)
class UncertaintyReport:
    """One clean-vs-attacked comparison row."""

    model: str
    dataset: str
    epsilon: float
    iterations: int
    tau: float
    entropy_clean: float
    entropy_adv: float
    rejection_clean: float
    rejection_adv: float


def _validate_batch(confidences) -> np.ndarray:
    batch = np.asarray(confidences, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[0] < 1 or batch.shape[1] < 1:
        raise ValueError(f"expected a (n, C) batch, got shape {batch.shape}")
    if not np.all(np.isfinite(batch)):
        raise ValueError("confidence batch contains non-finite values")
    if batch.min() < 0.0:
        raise ValueError(f"negative confidence {batch.min()}")
    sums = batch.sum(axis=1)
    worst = float(np.abs(sums - 1.0).max())
    if worst > DISTRIBUTION_TOL:
        raise ValueError(
            f"confidence rows must sum to 1 within {DISTRIBUTION_TOL}; "
            f"worst deviation {worst}")
    return batch


def entropy(confidences) -> float:
    """Mean Shannon entropy of the batch, in nats, with 0 log 0 = 0."""
    batch = _validate_batch(confidences)
    terms = np.where(batch > 0.0, -batch * np.log(np.where(batch > 0.0, batch, 1.0)), 0.0)
    return float(terms.sum(axis=1).mean())


def rejection_rate(confidences, cfg: MetricsConfig) -> float:
    """Fraction of samples whose max confidence falls strictly below tau."""
    batch = _validate_batch(confidences)
    return float(np.mean(batch.max(axis=1) < cfg.tau))


def compare(clean_conf, adv_conf, cfg: MetricsConfig, *, model: str = "",
            dataset: str = "", epsilon: float = 0.0,
            iterations: int = 0) -> UncertaintyReport:
    """Assemble the clean-vs-attacked metric row for one victim."""
    clean = _validate_batch(clean_conf)
    adv = _validate_batch(adv_conf)
    if clean.shape != adv.shape:
        raise ValueError(
            f"clean and attacked batches differ: {clean.shape} vs {adv.shape}")
    return UncertaintyReport(
        model=model,
        dataset=dataset,
        epsilon=epsilon,
        iterations=iterations,
        tau=cfg.tau,
        entropy_clean=entropy(clean),
        entropy_adv=entropy(adv),
        rejection_clean=rejection_rate(clean, cfg),
        rejection_adv=rejection_rate(adv, cfg),
    )
