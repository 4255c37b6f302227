"""Adversarial attacks on out-domain uncertainty estimation, desk scale.

Train victim uncertainty models on in-domain data, perturb out-domain
inputs with an iterated sign-gradient attack toward the victim's own
prediction, and quantify the damage with entropy and rejection rate.
"""

from . import attack, datasets, diffcore, harness, metrics, models

__version__ = "0.1.0"

__all__ = ["attack", "datasets", "diffcore", "harness", "metrics", "models",
           "__version__"]
