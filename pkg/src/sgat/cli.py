"""Command-line entry point: ``sgat {lift,train,eval,sweep,stats}``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from . import autodiff as ad
from .data import DatasetError
from .harness import (
    ConfigError, ExperimentConfig, TrainingDiverged, evaluate_f1, load_graph, prepare, sweep,
    train, train_repeats, write_curves_csv, write_report, write_sweep_csv,
)
from .lift import LiftError, lift, load_bundle, save_bundle
from .model import ModelConfig, model_forward

log = logging.getLogger("sgat")

EXPECTED_ERRORS = (ConfigError, DatasetError, LiftError, TrainingDiverged, FileNotFoundError, ValueError)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML experiment configuration")
    p.add_argument("--data", help="dataset directory (overrides [data] path); for stats, also a bundle directory")
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    p.add_argument("--seed", type=int, help="random seed (overrides [train] seed)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("lift", help="lift a dataset and write the complex bundle")
    _common(p)
    p = sub.add_parser("train", help="train and write report.json, curves.csv, params.ckpt")
    _common(p)
    p.add_argument("--repeats", type=int, help="number of seeds (seed, seed+1, ...)")
    p = sub.add_parser("eval", help="score a saved checkpoint on every split")
    _common(p)
    p.add_argument("--checkpoint", help="parameter file (default: <out>/params.ckpt)")
    p = sub.add_parser("sweep", help="epsilon/lambda grid; writes sweep.csv")
    _common(p)
    p = sub.add_parser("stats", help="print simplex counts, adjacency sizes and gamma")
    _common(p)
    return parser


def _config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError(f"{args.command} needs --config")
    cfg = ExperimentConfig.load(args.config, seed=args.seed)
    if args.data:
        cfg = dataclasses.replace(cfg, data_path=args.data)
    return cfg


def _cmd_lift(args) -> int:
    cfg = _config(args)
    bundle = lift(load_graph(cfg), cfg.lift)
    save_bundle(bundle, args.out)
    _print_stats(bundle)
    return 0


def _cmd_train(args) -> int:
    cfg = _config(args)
    if args.repeats is not None:
        cfg = dataclasses.replace(cfg, repeats=args.repeats)
    prep = prepare(load_graph(cfg), cfg.lift)
    os.makedirs(args.out, exist_ok=True)
    if cfg.repeats > 1:
        result = train_repeats(cfg, prep)
        write_report(result, os.path.join(args.out, "report.json"))
        write_curves_csv(result["runs"][0].curves, os.path.join(args.out, "curves.csv"))
        s = result["summary"]
        print(f"macro-F1 {s['macro_f1_mean']:.4f} +- {s['macro_f1_std']:.4f}  "
              f"micro-F1 {s['micro_f1_mean']:.4f} +- {s['micro_f1_std']:.4f}")
        return 0
    report, params, _ = train(cfg, prep, return_params=True)
    write_report(report, os.path.join(args.out, "report.json"))
    write_curves_csv(report.curves, os.path.join(args.out, "curves.csv"))
    ad.save_checkpoint(os.path.join(args.out, "params.ckpt"), params)
    print(f"best epoch {report.best_epoch}  macro-F1 {report.test_macro_f1:.4f}  "
          f"micro-F1 {report.test_micro_f1:.4f}")
    return 0


def _cmd_eval(args) -> int:
    cfg = _config(args)
    prep = prepare(load_graph(cfg), cfg.lift)
    path = args.checkpoint or os.path.join(args.out, "params.ckpt")
    params = {k: ad.Tensor(v) for k, v in ad.load_checkpoint(path).items()}
    mcfg = ModelConfig.for_bundle(prep.bundle, prep.graph.num_classes, **cfg.model)
    logits = model_forward(prep.bundle, params, mcfg)
    scores = {}
    for split, nodes in prep.masks.items():
        if len(nodes):
            macro, micro = evaluate_f1(logits, prep.labels, nodes)
            scores[split] = {"macro_f1": macro, "micro_f1": micro}
            print(f"{split:5s} macro-F1 {macro:.4f}  micro-F1 {micro:.4f}")
    os.makedirs(args.out, exist_ok=True)
    write_report(scores, os.path.join(args.out, "eval.json"))
    return 0


def _cmd_sweep(args) -> int:
    cfg = _config(args)
    rows = sweep(cfg)
    os.makedirs(args.out, exist_ok=True)
    write_sweep_csv(rows, os.path.join(args.out, "sweep.csv"))
    write_report(rows, os.path.join(args.out, "sweep.json"))
    failed = sum(1 for r in rows if r.get("error"))
    print(f"{len(rows)} grid points, {failed} failed")
    return 0


def _print_stats(bundle) -> None:
    for c in bundle.complexes:
        counts = " ".join(f"|X^{k}|={n}" for k, n in enumerate(c.counts()))
        nnz = " ".join(f"||A^{k}||={a.nnz}" for k, a in enumerate(c.adjacency))
        gamma = bundle.gammas()[c.eta]
        print(f"eta={c.eta} {counts} {nnz} gamma={gamma:.3f}")


def _cmd_stats(args) -> int:
    if args.data and os.path.exists(os.path.join(args.data, "bundle.json")):
        bundle = load_bundle(args.data)
    else:
        cfg = _config(args)
        bundle = lift(load_graph(cfg), cfg.lift)
    _print_stats(bundle)
    return 0


COMMANDS = {"lift": _cmd_lift, "train": _cmd_train, "eval": _cmd_eval, "sweep": _cmd_sweep, "stats": _cmd_stats}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)  # exits 2 with usage on bad input
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except EXPECTED_ERRORS as exc:
        print(f"sgat {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
