"""Command-line entry points for training, attacking, and reporting.

Flags override config-file values; with no --config the desk benchmark
defaults apply. Subcommands:

  train     fit victims and write checkpoints
  attack    perturb the out-domain set against one or all victims
  evaluate  full pipeline: train/load, attack, metrics, report.csv
  sweep     evaluate across the configured radius list
  report    pretty-print a previously written report.csv
"""

import argparse
import json
import sys
from pathlib import Path

from ..attack import AttackConfig
from ..models import evaluate_accuracy
from .config import (KNOWN_FAMILIES, ConfigError, config_from_dict,
                     config_hash)
from .experiment import (attack_out_domain, build_datasets, get_or_train,
                         run_experiment, sweep_epsilon)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oodattack",
        description="Out-domain adversarial attacks on uncertainty models.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, attack_flags=False, tau_flag=False):
        p.add_argument("--config", help="JSON config file (defaults apply if omitted)")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--model", choices=KNOWN_FAMILIES,
                       help="restrict to one victim family")
        if attack_flags:
            p.add_argument("--epsilon", type=float, help="attack radius")
            p.add_argument("--iters", type=int, help="attack iterations")
            p.add_argument("--step-size", type=float, help="attack step size")
        if tau_flag:
            p.add_argument("--tau", type=float, help="confidence threshold")

    p_train = sub.add_parser("train", help="train victims, write checkpoints")
    common(p_train)
    p_train.set_defaults(handler=_cmd_train)

    p_attack = sub.add_parser("attack", help="perturb the out-domain set")
    common(p_attack, attack_flags=True)
    p_attack.set_defaults(handler=_cmd_attack)

    p_eval = sub.add_parser("evaluate", help="full pipeline and report.csv")
    common(p_eval, attack_flags=True, tau_flag=True)
    p_eval.set_defaults(handler=_cmd_evaluate)

    p_sweep = sub.add_parser("sweep", help="evaluate across the radius sweep")
    common(p_sweep, attack_flags=True, tau_flag=True)
    p_sweep.set_defaults(handler=_cmd_sweep)

    p_report = sub.add_parser("report", help="pretty-print report.csv")
    p_report.add_argument("--out", required=True, help="run directory")
    p_report.set_defaults(handler=_cmd_report)

    return parser


def _load(args):
    doc = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ConfigError(f"{args.config}: config must be a JSON object")
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.out is not None:
        doc["out_dir"] = args.out
    if getattr(args, "model", None):
        doc["families"] = [args.model]
    attack = dict(doc.get("attack", {}))
    if getattr(args, "epsilon", None) is not None:
        attack["epsilon"] = args.epsilon
    if getattr(args, "iters", None) is not None:
        attack["iterations"] = args.iters
    if getattr(args, "step_size", None) is not None:
        attack["step_size"] = args.step_size
    if attack:
        doc["attack"] = attack
    if getattr(args, "tau", None) is not None:
        doc.setdefault("metrics", {})["tau"] = args.tau
    return config_from_dict(doc)


def _cmd_train(args) -> int:
    config = _load(args)
    out_dir = Path(config.out_dir)
    train_data, test_data, _ = build_datasets(config)
    for family in config.families:
        model = get_or_train(family, train_data, config, out_dir)
        line = f"{family}: checkpoint at {out_dir / 'checkpoints' / (family + '.json')}"
        if model.training_report is not None:
            line += f", train accuracy {model.training_report.train_accuracy:.4f}"
        if test_data is not None:
            acc = evaluate_accuracy(model, test_data.features, test_data.labels)
            line += f", test accuracy {acc:.4f}"
        print(line)
    return 0


def _cmd_attack(args) -> int:
    config = _load(args)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_data, _, out_data = build_datasets(config)
    from .experiment import (_write_adversarial_samples,  # shared writers
                             _write_confidence_dump)
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
        _write_adversarial_samples(out_dir / f"adversarial_{family}.csv",
                                   adv_rows)
        _write_confidence_dump(out_dir / f"confidences_{family}.csv",
                               clean_conf, adv_conf)
        print(f"{family}: attacked {len(adv_rows)} samples at "
              f"epsilon={config.attack.epsilon}, "
              f"mean max-confidence {clean_conf.max(axis=1).mean():.4f} -> "
              f"{adv_conf.max(axis=1).mean():.4f}")
    return 0


def _cmd_evaluate(args) -> int:
    config = _load(args)
    table = run_experiment(config)
    print(f"config {config_hash(config)} seed {config.seed}")
    _print_table(table)
    print(f"report written to {Path(config.out_dir) / 'report.csv'}")
    return 0


def _cmd_sweep(args) -> int:
    config = _load(args)
    table = sweep_epsilon(config)
    print(f"config {config_hash(config)} seed {config.seed}")
    _print_table(table)
    print(f"sweep written to {Path(config.out_dir) / 'sweep_report.csv'}")
    return 0


def _cmd_report(args) -> int:
    path = Path(args.out) / "report.csv"
    if not path.exists():
        path = Path(args.out) / "sweep_report.csv"
    if not path.exists():
        raise ConfigError(f"no report.csv or sweep_report.csv under {args.out}")
    lines = path.read_text(encoding="utf-8").strip().split("\n")
    rows = [line.split(",") for line in lines]
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    for r in rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(r, widths)))
    return 0


def _print_table(table) -> None:
    for row in table.rows:
        print(f"{row.model:>13}  eps={row.epsilon:<6g} "
              f"H {row.entropy_clean:.3f}->{row.entropy_adv:.3f}  "
              f"R {row.rejection_clean:.3f}->{row.rejection_adv:.3f}")


if __name__ == "__main__":
    sys.exit(main())
