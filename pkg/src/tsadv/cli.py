"""Command-line entry point: train / attack / sweep / export.

Every run writes a manifest.json with the fully resolved configuration;
re-running a command with ``--config manifest.json`` reproduces it. Flags
always win over config-file values. All randomness flows from --seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .attacks import AttackConfig, AttackKind
from .data import (SYNTHETIC_KINDS, Dataset, load_ucr_tsv, make_synthetic,
                   znormalize_dataset)
from .errors import ConfigError, DataError, MetricError, PersistenceError
from .evaluation import (SweepSpec, export_results,
                         run_benchmark, run_sweep, write_sweep_csv, plot_sweep,
                         SAMPLES_CSV_HEADER, COMPARISON_CSV_HEADER)
from .model import (ModelConfig, TrainConfig, load_weights, save_weights,
                    train, write_training_log)

ALL_ATTACKS = [k.value for k in AttackKind]


def _default_out_dir() -> str:
    return os.environ.get("TSADV_OUT_DIR", ".")


def _parse_conv_blocks(text: str):
    try:
        blocks = []
        for part in text.split(","):
            channels, width = part.lower().split("x")
            blocks.append((int(channels), int(width)))
        return tuple(blocks)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"conv blocks must look like '8x7,8x5', got {text!r}") from None


def _load_config_file(path: str) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    # accept either a bare config mapping or a full run manifest
    return doc.get("config", doc) if isinstance(doc, dict) else {}


def _merge_config(args: argparse.Namespace, keys: list[str]) -> dict:
    """Resolve key precedence: built-in default < config file < explicit flag.

    Parser defaults are None so an explicitly passed flag is detectable.
    """
    resolved = {}
    file_cfg = _load_config_file(args.config) if args.config else {}
    for key in keys:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            resolved[key] = flag_val
        elif key in file_cfg and file_cfg[key] is not None:
            resolved[key] = file_cfg[key]
    return resolved


def _write_manifest(out_dir: Path, command: str, config: dict,
                    dataset_manifests: list[dict], started: str) -> None:
    manifest = {
        "command": command,
        "config": config,
        "tool_version": __version__,
        "datasets": dataset_manifests,
        "timestamps": {"started": started,
                       "finished": datetime.now(timezone.utc).isoformat()},
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _load_dataset(args, split: str, parser) -> Dataset:
    if getattr(args, "synthetic", None):
        ds = make_synthetic(args.synthetic,
                            n_per_class=args.n_per_class or 50,
                            length=args.length or 64,
                            noise_std=args.noise_std if args.noise_std is not None else 0.05,
                            seed=(args.seed or 0) + (0 if split == "train" else 1),
                            split=split)
    else:
        if split == "train":
            path = args.data
        else:
            path = getattr(args, "test_data", None) or getattr(args, "data", None)
        if not path:
            parser.error(f"no {split} dataset given (use --data/--test-data or --synthetic)")
        if not Path(path).exists():
            print(f"error: dataset file not found: {path}", file=sys.stderr)
            raise SystemExit(2)
        ds = load_ucr_tsv(path, split=split)
    if not getattr(args, "no_normalize", False):
        ds = znormalize_dataset(ds)
    return ds


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args, parser) -> int:
    started = datetime.now(timezone.utc).isoformat()
    train_ds = _load_dataset(args, "train", parser)
    test_ds = None
    if args.test_data or args.synthetic:
        test_ds = _load_dataset(args, "test", parser)

    model_config = ModelConfig(
        num_classes=train_ds.num_classes,
        input_length=train_ds.length,
        conv_blocks=args.conv_blocks or ((8, 7), (8, 5)),
        seed=args.seed or 0,
    )
    train_config = TrainConfig(
        epochs=args.epochs or 50,
        batch_size=args.batch_size or 8,
        learning_rate=args.lr or 0.05,
        seed=args.seed or 0,
    )
    model, log = train(train_ds, model_config, train_config, test_ds)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_weights(model, out_dir / "weights.bin")
    write_training_log(log, out_dir / "training_log.csv")
    manifests = [train_ds.manifest()] + ([test_ds.manifest()] if test_ds else [])
    config = {
        "model": {"num_classes": model_config.num_classes,
                  "input_length": model_config.input_length,
                  "conv_blocks": [list(b) for b in model_config.conv_blocks],
                  "seed": model_config.seed},
        "train": {"epochs": train_config.epochs, "batch_size": train_config.batch_size,
                  "learning_rate": train_config.learning_rate, "seed": train_config.seed},
        "normalize": not args.no_normalize,
    }
    _write_manifest(out_dir, "train", config, manifests, started)
    last = log[-1]
    print(f"trained {train_ds.name}: train_acc={last.train_acc:.3f}"
          + (f" test_acc={last.test_acc:.3f}" if last.test_acc is not None else ""))
    return 0


_ATTACK_CFG_KEYS = ["attack", "beta", "epsilon", "iters", "gamma", "alpha", "mu",
                    "tv_weight", "seed", "clip_schedule", "early_stop", "gm_mode",
                    "l2_form", "init", "filter", "jobs", "limit", "formats"]


def _build_attack_configs(resolved: dict, parser) -> list[AttackConfig]:
    name = resolved.get("attack", "swap")
    kinds = ALL_ATTACKS if name == "all" else [name]
    for k in kinds:
        if k not in ALL_ATTACKS:
            parser.error(f"unknown attack {k!r}; valid: {', '.join(ALL_ATTACKS + ['all'])}")
    overrides = {}
    for src, dst in [("beta", "beta"), ("epsilon", "epsilon"), ("iters", "iterations"),
                     ("gamma", "gamma"), ("alpha", "alpha"), ("mu", "mu"),
                     ("tv_weight", "tv_weight"), ("clip_schedule", "clip_schedule"),
                     ("gm_mode", "gm_mode"), ("l2_form", "l2_form"), ("init", "init")]:
        if resolved.get(src) is not None:
            overrides[dst] = resolved[src]
    if resolved.get("early_stop"):
        overrides["early_stop"] = True
    try:
        return [AttackConfig.defaults(k, **overrides) for k in kinds]
    except ConfigError as exc:
        parser.error(str(exc))


def cmd_attack(args, parser) -> int:
    started = datetime.now(timezone.utc).isoformat()
    resolved = _merge_config(args, _ATTACK_CFG_KEYS)
    configs = _build_attack_configs(resolved, parser)
    if not Path(args.weights).exists():
        print(f"error: weights file not found: {args.weights}", file=sys.stderr)
        return 2
    model = load_weights(args.weights)
    dataset = _load_dataset(args, "test", parser)
    limit = resolved.get("limit")
    if limit:
        dataset = dataset.subset(range(min(int(limit), len(dataset))))

    base_seed = int(resolved.get("seed", 0))
    reports = run_benchmark(model, dataset, configs, base_seed=base_seed,
                            sample_filter=resolved.get("filter", "correct-only"),
                            jobs=int(resolved.get("jobs", 1)))

    out_dir = Path(args.out_dir)
    formats = resolved.get("formats", "csv,json")
    if isinstance(formats, str):
        formats = [f.strip() for f in formats.split(",") if f.strip()]
    export_results(reports, out_dir, formats=formats)
    resolved["seed"] = base_seed
    _write_manifest(out_dir, "attack", resolved, [dataset.manifest()], started)
    for r in reports:
        dist = "n/a" if r.average_distance is None else f"{r.average_distance:.4f}"
        print(f"{r.attack}: asr={r.asr:.4f} avg_dist={dist} "
              f"(attacked {r.n_attacked}, skipped {r.n_skipped})")
    return 0


def cmd_sweep(args, parser) -> int:
    started = datetime.now(timezone.utc).isoformat()
    resolved = _merge_config(args, _ATTACK_CFG_KEYS + ["param", "values", "seeds"])
    if not resolved.get("values"):
        parser.error("sweep needs a non-empty --values list")
    configs = _build_attack_configs(resolved, parser)
    if len(configs) != 1:
        parser.error("sweep over '--attack all' is not supported; pick one attack")
    if not Path(args.weights).exists():
        print(f"error: weights file not found: {args.weights}", file=sys.stderr)
        return 2
    model = load_weights(args.weights)
    dataset = _load_dataset(args, "test", parser)
    limit = resolved.get("limit")
    if limit:
        dataset = dataset.subset(range(min(int(limit), len(dataset))))

    try:
        spec = SweepSpec(parameter=resolved["param"],
                         values=[float(v) for v in resolved["values"]],
                         base_config=configs[0],
                         seeds=[int(s) for s in resolved.get("seeds", [0])])
    except (KeyError, ConfigError) as exc:
        parser.error(str(exc))
    rows = run_sweep(model, dataset, spec,
                     sample_filter=resolved.get("filter", "correct-only"),
                     jobs=int(resolved.get("jobs", 1)))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(rows, out_dir / "sweep.csv")
    plot_sweep(rows, out_dir / "sweep.svg")
    _write_manifest(out_dir, "sweep", resolved, [dataset.manifest()], started)
    for r in rows:
        dist = "n/a" if r.average_distance is None else f"{r.average_distance:.4f}"
        print(f"{r.parameter}={r.value} seed={r.seed}: asr={r.asr:.4f} avg_dist={dist}")
    return 0


def cmd_export(args, parser) -> int:
    """Re-derive CSV tables from a previously written reports.json."""
    if not Path(args.reports).exists():
        print(f"error: reports file not found: {args.reports}", file=sys.stderr)
        return 2
    with open(args.reports) as fh:
        docs = json.load(fh)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    columns = SAMPLES_CSV_HEADER.split(",")
    with open(out_dir / "samples.csv", "w") as fh:
        fh.write(SAMPLES_CSV_HEADER + "\n")
        for doc in docs:
            for row in doc["samples"]:
                fh.write(",".join(row[c] for c in columns) + "\n")
    with open(out_dir / "comparison.csv", "w") as fh:
        fh.write(COMPARISON_CSV_HEADER + "\n")
        for doc in docs:
            dist = "" if doc["average_distance"] is None else repr(doc["average_distance"])
            fh.write(f"{doc['attack']},{doc['asr']!r},{dist},{doc['n_attacked']},"
                     f"{doc['n_success']},{doc['n_skipped']}\n")
    print(f"exported {len(docs)} report(s) to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="UCR-style TSV file")
    p.add_argument("--test-data", help="UCR-style TSV test split")
    p.add_argument("--synthetic", choices=SYNTHETIC_KINDS,
                   help="generate a synthetic dataset instead of loading one")
    p.add_argument("--n-per-class", type=int, help="synthetic: samples per class (default 50)")
    p.add_argument("--length", type=int, help="synthetic: series length (default 64)")
    p.add_argument("--noise-std", type=float, help="synthetic: noise level (default 0.05)")
    p.add_argument("--no-normalize", action="store_true",
                   help="skip per-series z-normalization")


def _add_attack_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--attack", help="attack name or 'all' (default: swap)")
    p.add_argument("--beta", type=float, help="step size (default 0.0005; fgsm 0.1)")
    p.add_argument("--epsilon", type=float, help="L-inf clip bound (default 0.1)")
    p.add_argument("--iters", type=int, help="iterations (default 1000)")
    p.add_argument("--gamma", type=float, help="balance factor in (0, 0.5] (default 0.48)")
    p.add_argument("--alpha", type=float,
                   help="L2 weight (default: gm_l2/sgm 1.0, swap_l2 0.01)")
    p.add_argument("--mu", type=float, help="GM misclassification weight (default 1)")
    p.add_argument("--tv-weight", type=float,
                   help="successive-difference weight (default: sgm 0.1)")
    p.add_argument("--seed", type=int, help="base seed (default 0)")
    p.add_argument("--clip-schedule", choices=["per-step", "final-only"],
                   help="noise clipping schedule (default per-step)")
    p.add_argument("--early-stop", action="store_true", default=None,
                   help="halt a sample once its class flips (default off)")
    p.add_argument("--gm-mode", choices=["one-hot-ce", "neg-kl"],
                   help="GM loss form (default one-hot-ce)")
    p.add_argument("--l2-form", choices=["euclidean", "sum-abs"],
                   help="noise norm form (default euclidean)")
    p.add_argument("--init", choices=["zeros", "uniform"],
                   help="noise initialization (default zeros)")
    p.add_argument("--filter", choices=["correct-only", "all"],
                   help="which samples to attack (default correct-only)")
    p.add_argument("--jobs", type=int, help="sample-level parallelism (default 1)")
    p.add_argument("--limit", type=int, help="attack at most N samples")
    p.add_argument("--config", help="JSON config or manifest; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsadv",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the 1D-CNN classifier")
    _add_dataset_flags(p_train)
    p_train.add_argument("--conv-blocks", type=_parse_conv_blocks,
                         help="e.g. '8x7,8x5' (channels x odd width)")
    p_train.add_argument("--epochs", type=int, help="default 50")
    p_train.add_argument("--batch-size", type=int, help="default 8")
    p_train.add_argument("--lr", type=float, help="default 0.05")
    p_train.add_argument("--seed", type=int, help="default 0")
    p_train.add_argument("--config", help="JSON config; flags override it")
    p_train.add_argument("--out-dir", default=_default_out_dir())
    p_train.set_defaults(func=cmd_train)

    p_attack = sub.add_parser("attack", help="run attacks and write reports")
    p_attack.add_argument("--weights", required=True, help="weights file from 'train'")
    _add_dataset_flags(p_attack)
    _add_attack_flags(p_attack)
    p_attack.add_argument("--formats", help="comma list of csv,json,svg-plot "
                          "(default csv,json)")
    p_attack.add_argument("--out-dir", default=_default_out_dir())
    p_attack.set_defaults(func=cmd_attack)

    p_sweep = sub.add_parser("sweep", help="gamma or alpha parameter study")
    p_sweep.add_argument("--weights", required=True)
    _add_dataset_flags(p_sweep)
    _add_attack_flags(p_sweep)
    p_sweep.add_argument("--param", choices=["gamma", "alpha"])
    p_sweep.add_argument("--values", nargs="+", type=float)
    p_sweep.add_argument("--seeds", nargs="+", type=int)
    p_sweep.add_argument("--out-dir", default=_default_out_dir())
    p_sweep.set_defaults(func=cmd_sweep)

    p_export = sub.add_parser("export", help="re-derive CSVs from reports.json")
    p_export.add_argument("--reports", required=True)
    p_export.add_argument("--out-dir", default=_default_out_dir())
    p_export.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except (ConfigError, DataError, MetricError, PersistenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
