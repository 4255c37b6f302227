"""End-to-end experiment pipeline: train, evaluate clean, attack, report.

Everything written to disk is a pure function of (config, seed): reports
and checkpoints are byte-identical across reruns, which is what makes
the attack results auditable.
"""

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..attack import AttackConfig, check_constraint, fgsm, perturb
from ..datasets import (LabeledDataset, SyntheticSpec, UnlabeledDataset,
                        gen_in_domain, gen_out_domain, load_csv,
                        load_csv_unlabeled, load_idx)
from ..metrics import MetricsConfig, UncertaintyReport, compare
from ..models import (evaluate_accuracy, train_duq, train_ensemble,
                      train_ensemble_adversarial, train_rffgp, train_softmax)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, FilesSpec, config_hash

REPORT_COLUMNS = ("model", "dataset", "epsilon", "iters", "tau",
                  "H_clean", "H_adv", "R_clean", "R_adv")


class ExperimentError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""


@dataclass
class ReportTable:
    """Collected metric rows plus provenance for one run."""

    config_hash: str
    seed: int
    rows: list = field(default_factory=list)
    created_at: float = field(default_factory=time.time)

    def add(self, row: UncertaintyReport) -> None:
        key = (row.model, row.epsilon, row.tau)
        if any((r.model, r.epsilon, r.tau) == key for r in self.rows):
            raise ValueError(f"duplicate report row for {key}")
        self.rows.append(row)

    def to_csv_text(self) -> str:
        lines = [",".join(REPORT_COLUMNS)]
        for r in self.rows:
            lines.append(",".join([
                r.model, r.dataset, repr(r.epsilon), str(r.iterations),
                repr(r.tau), repr(r.entropy_clean), repr(r.entropy_adv),
                repr(r.rejection_clean), repr(r.rejection_adv),
            ]))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ConfidenceHistogram:
    """Per-class clean vs attacked confidences for one sample."""

    clean: np.ndarray
    attacked: np.ndarray

    @property
    def clean_argmax(self) -> int:
        return int(np.argmax(self.clean))

    @property
    def attacked_argmax(self) -> int:
        return int(np.argmax(self.attacked))

    @property
    def clean_max(self) -> float:
        return float(self.clean.max())

    @property
    def attacked_max(self) -> float:
        return float(self.attacked.max())

    def to_csv_text(self) -> str:
        lines = ["class,clean,attacked,clean_is_argmax,attacked_is_argmax"]
        for c in range(len(self.clean)):
            lines.append(",".join([
                str(c), repr(float(self.clean[c])), repr(float(self.attacked[c])),
                str(int(c == self.clean_argmax)),
                str(int(c == self.attacked_argmax)),
            ]))
        return "\n".join(lines) + "\n"


def emit_confidence_histogram(model, x, x_adv) -> ConfidenceHistogram:
    """Clean/attacked confidence pair for one sample, for bar plotting."""
    return ConfidenceHistogram(
        clean=model.predict_confidence(np.asarray(x)),
        attacked=model.predict_confidence(np.asarray(x_adv)),
    )


# ---- dataset assembly -------------------------------------------------------


def build_datasets(config: ExperimentConfig):
    """(train, in-domain test or None, out-domain) per the config."""
    spec = config.dataset
    if isinstance(spec, SyntheticSpec):
        return (gen_in_domain(spec, "train"), gen_in_domain(spec, "test"),
                gen_out_domain(spec))
    return _load_file_datasets(spec)


def _load_file_datasets(spec: FilesSpec):
    if spec.in_csv is not None:
        train = load_csv(spec.in_csv, spec.num_classes, spec.data_range)
    else:
        train = load_idx(spec.in_images, spec.in_labels, spec.num_classes)
    test = None
    if spec.in_test_csv is not None:
        test = load_csv(spec.in_test_csv, train.num_classes, spec.data_range)
    if spec.out_csv is not None:
        out = load_csv_unlabeled(spec.out_csv, spec.data_range)
    else:
        out = load_idx(spec.out_images)
    if spec.data_range is None and not np.allclose(train.data_range,
                                                   out.data_range):
        # Harmonize inferred ranges so the attack budget means one thing.
        lo = min(train.data_range[0], out.data_range[0])
        hi = max(train.data_range[1], out.data_range[1])
        train = LabeledDataset(train.features, train.labels, train.num_classes,
                               (lo, hi))
        out = UnlabeledDataset(out.features, (lo, hi))
        if test is not None:
            test = LabeledDataset(test.features, test.labels, test.num_classes,
                                  (lo, hi))
    return train, test, out


# ---- training ----------------------------------------------------------------


def train_family(family: str, train_data, config: ExperimentConfig):
    m = config.models
    if family == "softmax":
        cfg = config.train.resolve(family, config.seed)
        return train_softmax(train_data, cfg, hidden=m.hidden)
    if family == "ensemble":
        cfg = config.train.resolve(family, config.seed)
        return train_ensemble(train_data, cfg, members=m.ensemble_members,
                              hidden=m.hidden)
    if family == "ensemble_adv":
        cfg = config.train.resolve(family, config.seed,
                                   train_epsilon=m.train_epsilon)
        return train_ensemble_adversarial(train_data, cfg,
                                          members=m.ensemble_members,
                                          hidden=m.hidden)
    if family == "duq":
        cfg = config.train.resolve(family, config.seed)
        return train_duq(train_data, cfg, embed_dim=m.duq_embed_dim,
                         sigma=m.duq_sigma, gamma=m.duq_gamma, hidden=m.hidden)
    if family == "rffgp":
        cfg = config.train.resolve(family, config.seed)
        return train_rffgp(train_data, cfg, num_features=m.rff_features,
                           lengthscale=m.rff_lengthscale, hidden=m.hidden)
    raise ExperimentError(f"training stage: unknown family {family!r}")


def get_or_train(family: str, train_data, config: ExperimentConfig,
                 out_dir: Path):
    """Load the family's checkpoint if present, else train and save it."""
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    path = ckpt_dir / f"{family}.json"
    if path.exists():
        return load_checkpoint(path, expect_family=family)
    try:
        model = train_family(family, train_data, config)
    except Exception as exc:
        raise ExperimentError(f"training stage ({family}): {exc}") from exc
    cfg = config.train.resolve(family, config.seed)
    save_checkpoint(model, path, seed=cfg.seed)
    return model


# ---- attack + evaluation ------------------------------------------------------


def attack_out_domain(model, out_data, attack_cfg: AttackConfig,
                      single_step: bool = False):
    """Perturb every out-domain sample in index order.

    Returns (clean confidences, attacked confidences, adversarial samples,
    per-sample results). Constraints are re-verified here before any
    metric sees the samples.
    """
    features = out_data.features
    clean_conf = model.predict_confidence(features)
    adv_rows = np.empty_like(features)
    results = []
    for i in range(len(features)):
        try:
            if single_step:
                res = fgsm(model, features[i], attack_cfg.epsilon,
                           attack_cfg.data_range)
            else:
                res = perturb(model, features[i], attack_cfg)
        except Exception as exc:
            raise ExperimentError(
                f"attack stage ({model.family}, sample {i}): {exc}") from exc
        check_constraint(features[i], res.x_adv, attack_cfg)
        adv_rows[i] = res.x_adv
        results.append(res)
    adv_conf = model.predict_confidence(adv_rows)
    return clean_conf, adv_conf, adv_rows, results


# ---- full pipeline -------------------------------------------------------------


def run_experiment(config: ExperimentConfig, out_dir=None) -> ReportTable:
    """Train (or load) every victim, attack the out-domain set, and write
    report.csv, per-sample confidence dumps, histograms, and checkpoints."""
    out_dir = Path(out_dir if out_dir is not None else config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_data, test_data, out_data = build_datasets(config)
    dataset_tag = _dataset_tag(config)
    table = ReportTable(config_hash=config_hash(config), seed=config.seed)
    meta_families = {}
    for family in config.families:
        model = get_or_train(family, train_data, config, out_dir)
        attack_cfg = AttackConfig(
            epsilon=config.attack.epsilon,
            iterations=config.attack.iterations,
            step_size=config.attack.step_size,
            data_range=out_data.data_range,
        )
        clean_conf, adv_conf, adv_rows, _ = attack_out_domain(
            model, out_data, attack_cfg)
        row = compare(clean_conf, adv_conf, config.metrics, model=family,
                      dataset=dataset_tag, epsilon=config.attack.epsilon,
                      iterations=config.attack.iterations)
        table.add(row)
        _write_confidence_dump(out_dir / f"confidences_{family}.csv",
                               clean_conf, adv_conf)
        _write_adversarial_samples(out_dir / f"adversarial_{family}.csv",
                                   adv_rows)
        showcase = _showcase_index(clean_conf, adv_conf)
        hist = emit_confidence_histogram(model, out_data.features[showcase],
                                         adv_rows[showcase])
        (out_dir / f"histogram_{family}.csv").write_text(hist.to_csv_text(),
                                                         encoding="utf-8")
        meta_families[family] = _family_meta(model, test_data)
    (out_dir / "report.csv").write_text(table.to_csv_text(), encoding="utf-8")
    _write_run_meta(out_dir, table, dataset_tag, meta_families)
    return table


def sweep_epsilon(config: ExperimentConfig, out_dir=None) -> ReportTable:
    """One report row per (family, radius); the trained checkpoint is
    reused across radii. Writes sweep_report.csv plus a flags file naming
    the families whose attacked entropy is monotone in the radius."""
    if len(config.sweep) < 2:
        raise ValueError("sweep needs at least two radii")
    out_dir = Path(out_dir if out_dir is not None else config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_data, test_data, out_data = build_datasets(config)
    dataset_tag = _dataset_tag(config)
    table = ReportTable(config_hash=config_hash(config), seed=config.seed)
    for family in config.families:
        model = get_or_train(family, train_data, config, out_dir)
        for eps in config.sweep:
            attack_cfg = AttackConfig(
                epsilon=eps,
                iterations=config.attack.iterations,
                step_size=config.attack.step_size,
                data_range=out_data.data_range,
            )
            clean_conf, adv_conf, _, _ = attack_out_domain(
                model, out_data, attack_cfg)
            table.add(compare(clean_conf, adv_conf, config.metrics,
                              model=family, dataset=dataset_tag, epsilon=eps,
                              iterations=config.attack.iterations))
    (out_dir / "sweep_report.csv").write_text(table.to_csv_text(),
                                              encoding="utf-8")
    (out_dir / "sweep_flags.csv").write_text(_sweep_flags_text(table),
                                             encoding="utf-8")
    return table


def sweep_monotone_families(table: ReportTable) -> dict:
    """family -> True when attacked entropy is nonincreasing over the
    ascending nonzero radii."""
    flags = {}
    families = []
    for row in table.rows:
        if row.model not in families:
            families.append(row.model)
    for family in families:
        pts = sorted((r.epsilon, r.entropy_adv)
                     for r in table.rows if r.model == family and r.epsilon > 0)
        entropies = [h for _, h in pts]
        flags[family] = all(b <= a + 1e-12
                            for a, b in zip(entropies, entropies[1:]))
    return flags


def _sweep_flags_text(table: ReportTable) -> str:
    lines = ["model,entropy_monotone_decreasing"]
    for family, monotone in sweep_monotone_families(table).items():
        lines.append(f"{family},{str(monotone).lower()}")
    return "\n".join(lines) + "\n"


# ---- artifacts ------------------------------------------------------------------


def _dataset_tag(config: ExperimentConfig) -> str:
    spec = config.dataset
    if isinstance(spec, SyntheticSpec):
        from ..datasets import Annulus
        return ("synthetic-annulus" if isinstance(spec.out_geometry, Annulus)
                else "synthetic-shifted")
    source = spec.out_csv or spec.out_images
    return Path(source).stem


def _showcase_index(clean_conf, adv_conf) -> int:
    """Sample whose max confidence gained the most; ties at lowest index."""
    gain = adv_conf.max(axis=1) - clean_conf.max(axis=1)
    return int(np.argmax(gain))


def _family_meta(model, test_data) -> dict:
    report = model.training_report
    meta = {}
    if report is not None:
        meta["train_accuracy"] = report.train_accuracy
        meta["final_loss"] = report.final_loss
        meta["warnings"] = list(report.warnings)
    if test_data is not None:
        meta["test_accuracy"] = evaluate_accuracy(
            model, test_data.features, test_data.labels)
    return meta


def _write_confidence_dump(path, clean_conf, adv_conf) -> None:
    n, c = clean_conf.shape
    header = (["index"] + [f"clean_{j}" for j in range(c)]
              + [f"adv_{j}" for j in range(c)]
              + ["clean_argmax", "clean_max", "adv_argmax", "adv_max"])
    lines = [",".join(header)]
    for i in range(n):
        row = [str(i)]
        row += [repr(v) for v in clean_conf[i]]
        row += [repr(v) for v in adv_conf[i]]
        row += [str(int(clean_conf[i].argmax())), repr(float(clean_conf[i].max())),
                str(int(adv_conf[i].argmax())), repr(float(adv_conf[i].max()))]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_adversarial_samples(path, adv_rows) -> None:
    d = adv_rows.shape[1]
    lines = [",".join([f"x{j}" for j in range(d)])]
    for row in adv_rows:
        lines.append(",".join(repr(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_run_meta(out_dir: Path, table: ReportTable, dataset_tag: str,
                    families: dict) -> None:
    # No timestamps here: every byte must follow from (config, seed).
    meta = {
        "config_hash": table.config_hash,
        "seed": table.seed,
        "dataset": dataset_tag,
        "families": families,
    }
    (out_dir / "run_meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
