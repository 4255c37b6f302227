"""Minimal tensor + reverse-mode autodiff engine backing the victim models."""

from .engine import LOG_FLOOR, Gradients, Parameter, Tape, Tensor
from .optim import SGD, collect_parameters
from .rng import child_seed, stream

__all__ = [
    "LOG_FLOOR",
    "Gradients",
    "Parameter",
    "SGD",
    "Tape",
    "Tensor",
    "child_seed",
    "collect_parameters",
    "stream",
]
