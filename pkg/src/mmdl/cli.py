"""Command-line driver: ``mmdl {gen-data,train,eval,ablate}``.

Exit codes: 0 success, 2 configuration error, 3 data/file error,
4 numeric failure (non-finite loss).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from .ablation import run_ablation, write_ablation_csv
from .checkpoint import load_checkpoint
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    NumericError,
    ProtocolError,
    ShapeError,
)
from .evalkit import evaluate
from .synthdata import SynthConfig, generate, read_dataset, split_identities, write_dataset
from .training import TrainConfig, run_training

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return d


def gen_data(synth_cfg, out_dir, test_identities=20):
    """Write ``train.csv`` and ``test.csv`` with disjoint identities; returns both paths."""
    total = replace(synth_cfg, identities=synth_cfg.identities + test_identities)
    train, test = split_identities(generate(total), test_identities)
    os.makedirs(out_dir, exist_ok=True)
    paths = os.path.join(out_dir, "train.csv"), os.path.join(out_dir, "test.csv")
    write_dataset(train, paths[0])
    write_dataset(test, paths[1])
    return paths


def run_eval(checkpoint_path, dataset_path, report_path=None, expected_n=None,
             expected_q=None, roc_path=None):
    params, layer, _ = load_checkpoint(checkpoint_path, expected_n, expected_q)
    test = read_dataset(dataset_path)
    if test.dim != params.input_dim:
        raise ShapeError(f"dataset has {test.dim} features, encoder expects {params.input_dim}")
    report = evaluate(params, layer, test)
    if report_path:
        report.write_json(report_path)
    if roc_path:
        report.write_roc_csv(roc_path)
    return report


def _train_config(args):
    cfg = TrainConfig.from_json(args.config) if args.config else TrainConfig(synth={})
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _cmd_gen_data(args):
    d = _read_json(args.config) if args.config else {}
    test_identities = d.pop("test_identities", 20)
    if args.seed is not None:
        d["seed"] = args.seed
    synth = SynthConfig.from_dict(d)
    if not isinstance(test_identities, int) or test_identities < 1:
        raise ConfigError("test_identities must be a positive integer")
    for p in gen_data(synth, args.out, test_identities):
        print(p)


def _cmd_train(args):
    cfg = _train_config(args)
    if args.out:
        cfg = replace(cfg, checkpoint_path=args.out)
    if cfg.checkpoint_path is None:
        raise ConfigError("no checkpoint destination: pass --out or set checkpoint_path")
    if cfg.log_path is None:
        cfg = replace(cfg, log_path=cfg.checkpoint_path + ".log.jsonl")
    result = run_training(cfg)
    means = [r["l_mml"] for r in result.log if r["batch"] is None]
    print(json.dumps({"checkpoint": cfg.checkpoint_path, "log": cfg.log_path,
                      "epochs": len(means), "final_l_mml": means[-1] if means else None}))


def _cmd_eval(args):
    cfg = TrainConfig.from_json(args.config) if args.config else None
    checkpoint = args.checkpoint or (cfg and cfg.checkpoint_path)
    dataset = args.dataset or (cfg and cfg.test_dataset_path)
    report_path = args.out or (cfg and cfg.report_path)
    if not checkpoint or not dataset:
        raise ConfigError("eval needs a checkpoint and a test dataset")
    report = run_eval(
        checkpoint,
        dataset,
        report_path,
        expected_n=cfg.n if cfg else None,
        expected_q=cfg.q if cfg else None,
        roc_path=args.roc,
    )
    print(json.dumps(report.to_dict()))


def _cmd_ablate(args):
    cfg = _train_config(args)
    seeds = args.seeds if args.seeds else [cfg.seed]
    rows = run_ablation(cfg, seeds)
    if args.out:
        write_ablation_csv(rows, args.out)
    for row in rows:
        print(f"{row.variant.name:<10} rank1={row.median_rank1:.4f} "
              f"vr@far=0.1%={row.median_vr:.4f}")


def build_parser():
    parser = argparse.ArgumentParser(prog="mmdl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help=out_help)
        return p

    p = common(sub.add_parser("gen-data", help="write synthetic train/test CSVs"),
               "output directory")
    p.set_defaults(func=_cmd_gen_data)
    p = common(sub.add_parser("train", help="pretrain, fine-tune, write checkpoint"),
               "checkpoint path")
    p.set_defaults(func=_cmd_train)
    p = common(sub.add_parser("eval", help="evaluate a checkpoint on a test set"),
               "report JSON path")
    p.add_argument("--checkpoint")
    p.add_argument("--dataset")
    p.add_argument("--roc", help="optional ROC CSV path")
    p.set_defaults(func=_cmd_eval)
    p = common(sub.add_parser("ablate", help="component ablation table"), "CSV path")
    p.add_argument("--seeds", type=int, nargs="+")
    p.set_defaults(func=_cmd_ablate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, CheckpointError, ProtocolError, ShapeError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
