"""Experiment configuration: JSON schema, strict parsing, defaults.

The config document is nested key/value JSON; unknown keys are rejected
at every level so typos fail fast. CLI flags override file values before
the config object is built, and the config hash is computed on the fully
resolved document.
"""

import hashlib
import json
from dataclasses import dataclass, field

from ..datasets import Annulus, ShiftedClusters, SyntheticSpec
from ..diffcore import rng
from ..metrics import MetricsConfig
from ..models import AdvTrainSpec, TrainConfig

KNOWN_FAMILIES = ("softmax", "ensemble", "ensemble_adv", "duq", "rffgp")
DEFAULT_FAMILIES = KNOWN_FAMILIES


class ConfigError(ValueError):
    """Invalid or unparseable experiment configuration."""


def _take(section: dict, allowed, where: str) -> dict:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(
            f"unknown keys in {where}: {sorted(unknown)}; allowed: {sorted(allowed)}")
    return dict(section)


@dataclass(frozen=True)
class ModelsSection:
    """Architecture and per-family hyperparameters."""

    hidden: tuple = (64, 64)
    ensemble_members: int = 5
    train_epsilon: float = 0.5
    duq_embed_dim: int = 16
    duq_sigma: float = 0.5
    duq_gamma: float = 0.5
    rff_features: int = 256
    rff_lengthscale: float = 1.0

    def __post_init__(self):
        if not self.hidden or any(w < 1 for w in self.hidden):
            raise ConfigError(f"invalid hidden widths {self.hidden}")
        if self.ensemble_members < 2:
            raise ConfigError("ensemble_members must be >= 2")
        if self.train_epsilon < 0:
            raise ConfigError("train_epsilon must be >= 0")


@dataclass(frozen=True)
class TrainSection:
    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    seed: int | None = None
    per_family: dict = field(default_factory=dict)

    def resolve(self, family: str, master_seed: int,
                train_epsilon: float | None = None) -> TrainConfig:
        """Concrete TrainConfig for one family, applying overrides and
        deriving the training seed from the master seed when unset."""
        values = {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
        }
        overrides = self.per_family.get(family, {})
        values.update(
            _take(overrides, values.keys(), f"train.per_family.{family}"))
        seed = self.seed if self.seed is not None else rng.child_seed(
            master_seed, "train")
        adversarial = None if train_epsilon is None else AdvTrainSpec(train_epsilon)
        return TrainConfig(seed=seed, adversarial=adversarial, **values)


@dataclass(frozen=True)
class AttackSection:
    epsilon: float = 0.5
    iterations: int = 10
    step_size: float | None = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigError("attack epsilon must be >= 0")
        if self.iterations < 0:
            raise ConfigError("attack iterations must be >= 0")
        if self.step_size is not None and self.step_size <= 0:
            raise ConfigError("attack step_size must be > 0")


@dataclass(frozen=True)
class FilesSpec:
    """Datasets read from disk: labeled CSV or IDX pairs for in-domain,
    unlabeled CSV or IDX images for out-domain."""

    in_csv: str | None = None
    in_images: str | None = None
    in_labels: str | None = None
    in_test_csv: str | None = None
    out_csv: str | None = None
    out_images: str | None = None
    num_classes: int | None = None
    data_range: tuple | None = None

    def __post_init__(self):
        has_in_csv = self.in_csv is not None
        has_in_idx = self.in_images is not None and self.in_labels is not None
        if has_in_csv == has_in_idx:
            raise ConfigError(
                "files dataset needs exactly one in-domain source: in_csv or "
                "in_images + in_labels")
        if (self.out_csv is None) == (self.out_images is None):
            raise ConfigError(
                "files dataset needs exactly one out-domain source: out_csv or "
                "out_images")
        if has_in_csv and self.num_classes is None:
            raise ConfigError("num_classes is required with in_csv")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: SyntheticSpec | FilesSpec
    seed: int = 7
    out_dir: str = "runs/default"
    families: tuple = DEFAULT_FAMILIES
    models: ModelsSection = field(default_factory=ModelsSection)
    train: TrainSection = field(default_factory=TrainSection)
    attack: AttackSection = field(default_factory=AttackSection)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    sweep: tuple = (0.0, 0.25, 0.5, 1.0)

    def __post_init__(self):
        unknown = set(self.families) - set(KNOWN_FAMILIES)
        if unknown:
            raise ConfigError(
                f"unknown families {sorted(unknown)}; known: {KNOWN_FAMILIES}")
        if not self.families:
            raise ConfigError("families must be nonempty")
        if any(e < 0 for e in self.sweep):
            raise ConfigError("sweep radii must be >= 0")


def default_config() -> ExperimentConfig:
    """The desk benchmark: synthetic blobs vs annulus, all five families."""
    return config_from_dict({})


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config_from_dict(doc)


def config_from_dict(doc: dict) -> ExperimentConfig:
    doc = _take(doc, ("seed", "out_dir", "families", "dataset", "models",
                      "train", "attack", "metrics", "sweep"), "config")
    seed = int(doc.get("seed", 7))
    dataset = _parse_dataset(doc.get("dataset", {}), seed)
    models = ModelsSection(**_coerce_models(doc.get("models", {})))
    train = _parse_train(doc.get("train", {}))
    attack_kwargs = _take(doc.get("attack", {}),
                          ("epsilon", "iterations", "step_size"), "attack")
    metrics_kwargs = _take(doc.get("metrics", {}), ("tau",), "metrics")
    return ExperimentConfig(
        dataset=dataset,
        seed=seed,
        out_dir=str(doc.get("out_dir", "runs/default")),
        families=tuple(doc.get("families", DEFAULT_FAMILIES)),
        models=models,
        train=train,
        attack=AttackSection(**attack_kwargs),
        metrics=MetricsConfig(**metrics_kwargs),
        sweep=tuple(float(e) for e in doc.get("sweep", (0.0, 0.25, 0.5, 1.0))),
    )


def _coerce_models(section: dict) -> dict:
    kwargs = _take(section, ("hidden", "ensemble_members", "train_epsilon",
                             "duq_embed_dim", "duq_sigma", "duq_gamma",
                             "rff_features", "rff_lengthscale"), "models")
    if "hidden" in kwargs:
        kwargs["hidden"] = tuple(int(w) for w in kwargs["hidden"])
    return kwargs


def _parse_train(section: dict) -> TrainSection:
    kwargs = _take(section, ("epochs", "batch_size", "learning_rate",
                             "momentum", "seed", "per_family"), "train")
    per_family = kwargs.pop("per_family", {})
    for family in per_family:
        if family not in KNOWN_FAMILIES:
            raise ConfigError(f"train.per_family names unknown family {family!r}")
    return TrainSection(per_family=per_family, **kwargs)


def _parse_dataset(section: dict, master_seed: int):
    kind = section.get("kind", "synthetic")
    if kind == "synthetic":
        kwargs = _take(section, ("kind", "dimension", "num_classes",
                                 "cluster_means", "cluster_sigma", "data_range",
                                 "out_geometry", "margin_sigmas",
                                 "train_per_class", "test_per_class",
                                 "out_samples", "seed"), "dataset")
        kwargs.pop("kind", None)
        if kwargs.get("seed") is None:
            kwargs["seed"] = rng.child_seed(master_seed, "data")
        if "cluster_means" in kwargs and kwargs["cluster_means"] is not None:
            kwargs["cluster_means"] = tuple(
                tuple(float(v) for v in mean) for mean in kwargs["cluster_means"])
        if "data_range" in kwargs:
            kwargs["data_range"] = tuple(kwargs["data_range"])
        if "out_geometry" in kwargs:
            kwargs["out_geometry"] = _parse_geometry(kwargs["out_geometry"])
        try:
            return SyntheticSpec(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"invalid synthetic dataset: {exc}") from exc
    if kind == "files":
        kwargs = _take(section, ("kind", "in_csv", "in_images", "in_labels",
                                 "in_test_csv", "out_csv", "out_images",
                                 "num_classes", "data_range"), "dataset")
        kwargs.pop("kind", None)
        if kwargs.get("data_range") is not None:
            kwargs["data_range"] = tuple(kwargs["data_range"])
        return FilesSpec(**kwargs)
    raise ConfigError(f"unknown dataset kind {kind!r}")


def _parse_geometry(section):
    if isinstance(section, (Annulus, ShiftedClusters)):
        return section
    kind = section.get("kind")
    if kind == "annulus":
        kwargs = _take(section, ("kind", "r_min", "r_max"), "dataset.out_geometry")
        return Annulus(float(kwargs["r_min"]), float(kwargs["r_max"]))
    if kind == "shifted":
        kwargs = _take(section, ("kind", "offsets"), "dataset.out_geometry")
        return ShiftedClusters(tuple(
            tuple(float(v) for v in off) for off in kwargs["offsets"]))
    raise ConfigError(f"unknown out-domain geometry kind {kind!r}")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Canonical plain-dict form; reloading it reproduces the config."""
    if isinstance(cfg.dataset, SyntheticSpec):
        spec = cfg.dataset
        geometry = ({"kind": "annulus", "r_min": spec.out_geometry.r_min,
                     "r_max": spec.out_geometry.r_max}
                    if isinstance(spec.out_geometry, Annulus) else
                    {"kind": "shifted",
                     "offsets": [list(o) for o in spec.out_geometry.offsets]})
        dataset = {
            "kind": "synthetic",
            "dimension": spec.dimension,
            "num_classes": spec.num_classes,
            "cluster_means": [list(m) for m in spec.cluster_means],
            "cluster_sigma": spec.cluster_sigma,
            "data_range": list(spec.data_range),
            "out_geometry": geometry,
            "margin_sigmas": spec.margin_sigmas,
            "train_per_class": spec.train_per_class,
            "test_per_class": spec.test_per_class,
            "out_samples": spec.out_samples,
            "seed": spec.seed,
        }
    else:
        f = cfg.dataset
        dataset = {
            "kind": "files",
            "in_csv": f.in_csv,
            "in_images": f.in_images,
            "in_labels": f.in_labels,
            "in_test_csv": f.in_test_csv,
            "out_csv": f.out_csv,
            "out_images": f.out_images,
            "num_classes": f.num_classes,
            "data_range": list(f.data_range) if f.data_range else None,
        }
    return {
        "seed": cfg.seed,
        "out_dir": cfg.out_dir,
        "families": list(cfg.families),
        "dataset": dataset,
        "models": {
            "hidden": list(cfg.models.hidden),
            "ensemble_members": cfg.models.ensemble_members,
            "train_epsilon": cfg.models.train_epsilon,
            "duq_embed_dim": cfg.models.duq_embed_dim,
            "duq_sigma": cfg.models.duq_sigma,
            "duq_gamma": cfg.models.duq_gamma,
            "rff_features": cfg.models.rff_features,
            "rff_lengthscale": cfg.models.rff_lengthscale,
        },
        "train": {
            "epochs": cfg.train.epochs,
            "batch_size": cfg.train.batch_size,
            "learning_rate": cfg.train.learning_rate,
            "momentum": cfg.train.momentum,
            "seed": cfg.train.seed,
            "per_family": cfg.train.per_family,
        },
        "attack": {
            "epsilon": cfg.attack.epsilon,
            "iterations": cfg.attack.iterations,
            "step_size": cfg.attack.step_size,
        },
        "metrics": {"tau": cfg.metrics.tau},
        "sweep": list(cfg.sweep),
    }


def config_hash(cfg: ExperimentConfig) -> str:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
