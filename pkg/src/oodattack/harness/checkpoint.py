"""Versioned, self-describing model checkpoints.

JSON text with flat weight arrays; floats serialize through Python's
shortest-repr form, so a load reproduces predictions bit-exactly.
"""

import json

import numpy as np

from ..diffcore import rng
from ..models import (DUQModel, EnsembleModel, FeatureExtractor, RFFGPModel,
                      SoftmaxModel)

CHECKPOINT_FORMAT = "oodattack-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable, corrupt, or mismatched checkpoint file."""


def save_checkpoint(model, path, *, seed: int | None = None) -> None:
    """Write the model (family tag, architecture, weights, metadata)."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "family": model.family,
        "architecture": _architecture(model),
        "weights": _weights_payload(model),
        "metadata": {
            "seed": seed,
            "train_epsilon": getattr(model, "train_epsilon", None),
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_checkpoint(path, expect_family: str | None = None):
    """Rebuild a model from disk; checks version and (optionally) family."""
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint: {exc}") from exc
    if not isinstance(payload, dict):
        raise CheckpointError(f"{path}: corrupt checkpoint: not an object")
    try:
        fmt = payload["format"]
        version = payload["version"]
        family = payload["family"]
        arch = payload["architecture"]
        weights = payload["weights"]
    except KeyError as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint: missing {exc}") from exc
    if fmt != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a model checkpoint (format {fmt!r})")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {version} unsupported "
            f"(expected {CHECKPOINT_VERSION})")
    if expect_family is not None and family != expect_family:
        raise CheckpointError(
            f"{path}: family tag mismatch: checkpoint holds {family!r}, "
            f"caller expected {expect_family!r}")
    try:
        return _rebuild(family, arch, weights, payload.get("metadata", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint: {exc}") from exc


# ---- serialization helpers --------------------------------------------------


def _array_payload(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "data": arr.ravel().tolist()}


def _array_restore(item: dict) -> np.ndarray:
    arr = np.asarray(item["data"], dtype=np.float64)
    return arr.reshape(item["shape"])


def _params_payload(model) -> list:
    return [_array_payload(p.value.data) for p in model.parameters()]


def _restore_params(model, items) -> None:
    params = model.parameters()
    if len(items) != len(params):
        raise ValueError(
            f"weight count mismatch: file has {len(items)}, model needs "
            f"{len(params)}")
    for p, item in zip(params, items):
        p.assign(_array_restore(item))


def _architecture(model) -> dict:
    arch = {"input_dim": model.input_dim, "num_classes": model.num_classes}
    if isinstance(model, EnsembleModel):
        arch["hidden"] = list(model.members[0].extractor.widths[1:])
        arch["members"] = len(model.members)
    else:
        arch["hidden"] = list(model.extractor.widths[1:])
    if isinstance(model, DUQModel):
        arch.update(embed_dim=model.embed_dim, sigma=model.sigma,
                    gamma=model.gamma)
    if isinstance(model, RFFGPModel):
        arch.update(num_features=model.num_features,
                    lengthscale=model.lengthscale,
                    mean_field=model.mean_field)
    return arch


def _weights_payload(model):
    if isinstance(model, EnsembleModel):
        return {"members": [_params_payload(m) for m in model.members]}
    payload = {"params": _params_payload(model)}
    if isinstance(model, RFFGPModel):
        payload["precision"] = _array_payload(model.precision)
        payload["precision_inv"] = _array_payload(model.precision_inv)
    return payload


def _blank_extractor(arch):
    return FeatureExtractor(int(arch["input_dim"]),
                            [int(w) for w in arch["hidden"]],
                            rng.stream(0, "checkpoint-load"))


def _blank_softmax(arch) -> SoftmaxModel:
    return SoftmaxModel(_blank_extractor(arch), int(arch["num_classes"]),
                        rng.stream(0, "checkpoint-load"))


def _rebuild(family, arch, weights, metadata):
    if family == "softmax":
        model = _blank_softmax(arch)
        _restore_params(model, weights["params"])
        return model
    if family in ("ensemble", "ensemble_adv"):
        members = []
        for items in weights["members"]:
            member = _blank_softmax(arch)
            _restore_params(member, items)
            members.append(member)
        if len(members) != int(arch["members"]):
            raise ValueError("member count disagrees with architecture")
        train_epsilon = None
        if family == "ensemble_adv":
            train_epsilon = float(metadata.get("train_epsilon") or 0.0)
        return EnsembleModel(members, train_epsilon=train_epsilon)
    if family == "duq":
        model = DUQModel(_blank_extractor(arch), int(arch["num_classes"]),
                         int(arch["embed_dim"]), float(arch["sigma"]),
                         float(arch["gamma"]), rng.stream(0, "checkpoint-load"))
        _restore_params(model, weights["params"])
        return model
    if family == "rffgp":
        model = RFFGPModel(_blank_extractor(arch), int(arch["num_classes"]),
                           int(arch["num_features"]), float(arch["lengthscale"]),
                           rng.stream(0, "checkpoint-load"),
                           mean_field=float(arch["mean_field"]))
        _restore_params(model, weights["params"])
        model.precision = _array_restore(weights["precision"])
        model.precision_inv = _array_restore(weights["precision_inv"])
        return model
    raise ValueError(f"unknown model family {family!r}")
