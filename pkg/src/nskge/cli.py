#!/usr/bin/env python3
"""
cli.py

Purpose
- Command-line entry point: train, eval, verify, bench, plus the synth and
  stats helpers.
- Defaults are the full-size run settings, so
      nskge train --data FB15K237 --model transe --mode ns --out runs/ns-transe
  is a complete NS-TransE run (d=200, 2000 epochs, lr 1e-4, c- = 1e-3).

Usage
  python -m nskge train  --data DIR --model {distmult|simple|complex|transe} --mode {ns|sampled} --out DIR
  python -m nskge eval   --data DIR --checkpoint DIR --mode {raw|filtered|both} --out FILE
  python -m nskge verify --scale {tiny|small} --seed N
  python -m nskge bench  --data DIR --dim N --epochs N --out FILE
  python -m nskge synth  --out DIR [--planted|--uniform] --entities N --relations N --positives N
  python -m nskge stats  --data DIR

Exit codes
  0 success, 1 usage error, 2 data error, 3 numeric failure.

Numerical modules are imported inside the command handlers so --threads can
set the BLAS/OpenMP environment before numpy loads.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from . import __version__
from .errors import ConfigError, DataError, GuardError, NumericError

logger = logging.getLogger("nskge")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

DATA_ROOT_ENV = "NSKGE_DATA_ROOT"
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")
MODELS = ("distmult", "simple", "complex", "transe")


class UsageParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so usage errors map to exit code 1."""

    def error(self, message: str):
        raise ConfigError(message)


# -----------------------------
# Helpers
# -----------------------------

def resolve_data(value: str) -> Path:
    path = Path(value)
    if path.is_dir():
        return path
    root = os.environ.get(DATA_ROOT_ENV)
    if root and (Path(root) / value).is_dir():
        return Path(root) / value
    raise DataError("dataset directory not found" + (f" (also tried ${DATA_ROOT_ENV}={root})" if root else ""), path)


def pin_threads(n: Optional[int]) -> None:
    if n is None:
        return
    if n < 1:
        raise ConfigError(f"--threads must be >= 1, got {n}")
    for var in THREAD_VARS:
        os.environ[var] = str(n)


def write_json(path: Path, payload: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, default=str), encoding="utf-8")
    return path


# -----------------------------
# Commands
# -----------------------------

def cmd_train(args: argparse.Namespace) -> int:
    from .config import SamplerConfig, TrainConfig, config_hash
    from .data import load_dataset
    from .models import save_checkpoint

    if args.mode == "ns" and (args.neg_k is not None or args.batch is not None):
        raise ConfigError("--neg-k/--batch are only valid with --mode sampled")
    c_neg = args.c_neg if args.c_neg is not None else (1e-3 if args.mode == "ns" else 1.0)

    config = TrainConfig(
        kind=args.model, dim=args.dim, epochs=args.epochs, lr=args.lr, lr_decay=args.lr_decay,
        c_pos=args.c_pos, c_neg=c_neg, l2=args.l2, seed=args.seed, log_every=args.log_every,
    ).validate()
    sampler = None
    if args.mode == "sampled":
        sampler = SamplerConfig(
            negatives_per_positive=args.neg_k if args.neg_k is not None else 25,
            batch_size=args.batch if args.batch is not None else 4000,
        ).validate()

    data_dir = resolve_data(args.data)
    dataset = load_dataset(data_dir)
    out = Path(args.out)
    run_hash = config_hash(config.to_dict(), sampler.to_dict() if sampler else {}, {"mode": args.mode, "data": data_dir.name})
    write_json(out / "config.json", {
        "version": __version__,
        "config_hash": run_hash,
        "mode": args.mode,
        "data": str(data_dir),
        "deterministic": args.deterministic,
        "threads": args.threads,
        "train": config.to_dict(),
        "sampler": sampler.to_dict() if sampler else None,
        "argv": {k: v for k, v in vars(args).items() if k != "func"},
    })

    try:
        if sampler is None:
            from .ns_train import train
            params, history = train(config, dataset, progress=not args.quiet)
        else:
            from .sampled_train import train_sampled
            params, history = train_sampled(config, sampler, dataset, progress=not args.quiet)
    except NumericError as exc:
        from .ns_train import TrainHistory
        TrainHistory(list(exc.history or [])).write_csv(out / "history.csv")
        raise

    save_checkpoint(params, out / "checkpoint", extra={"config_hash": run_hash, "dataset": dataset.name, "mode": args.mode})
    history.write_csv(out / "history.csv")
    print(f"OK: wrote {out} (final loss {history.records[-1].loss:.6g})")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    from .data import build_index, load_dataset
    from .evaluate import evaluate
    from .models import load_checkpoint, read_manifest

    dataset = load_dataset(resolve_data(args.data))
    manifest = read_manifest(args.checkpoint)
    if (manifest.get("entity_count"), manifest.get("relation_count")) != (dataset.entity_count, dataset.relation_count):
        raise DataError(
            f"checkpoint is for |E|={manifest.get('entity_count')}, |R|={manifest.get('relation_count')}; "
            f"dataset has |E|={dataset.entity_count}, |R|={dataset.relation_count}",
            Path(args.checkpoint) / "manifest.json",
        )
    params = load_checkpoint(args.checkpoint)
    triples = dataset.split(args.split)
    modes = ["raw", "filtered"] if args.mode == "both" else [args.mode]
    index = build_index(dataset.all_known()) if "filtered" in modes else None

    results: List[Dict] = []
    for mode in modes:
        metrics = evaluate(params.kind, params, triples, mode, index if mode == "filtered" else None, progress=not args.quiet)
        results.append(metrics.to_json(
            model=params.kind.value, dataset=dataset.name, mode=mode,
            seed=manifest.get("seed"), config_hash=manifest.get("config_hash"),
        ))
        print(f"{mode:<9} MR={metrics.mr:.2f} MRR={metrics.mrr:.4f} "
              f"HR@1={metrics.hr[1]:.4f} HR@3={metrics.hr[3]:.4f} HR@10={metrics.hr[10]:.4f}")
    write_json(Path(args.out), results[0] if len(results) == 1 else results)
    print(f"OK: wrote {args.out}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    from .oracle import run_verify

    results = run_verify(args.scale, args.seed)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    if failed:
        reasons = "; ".join(f"{r.kind.label} {r.name} err={r.error:.3e}" for r in failed)
        print(f"ERROR: verify failed: {reasons}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"OK: {len(results)} properties passed")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    from .bench import compare_epoch_time, format_table, time_loss_paths, write_report
    from .data import load_dataset

    dataset = load_dataset(resolve_data(args.data))
    report = compare_epoch_time(dataset, MODELS, dim=args.dim, repeats=args.epochs,
                                negatives=args.neg_k, batch_size=args.batch, seed=args.seed)
    if not args.skip_kernel:
        report["kernel"] = [time_loss_paths(k, (500, 20, 32), repeats=5, seed=args.seed) for k in MODELS]
    write_report(report, Path(args.out))
    print(format_table(report))
    print(f"NS ordering: {' < '.join(report['ns_ordering'])}")
    print(f"Gram-count ordering: {' < '.join(report['cost_ordering'])}")
    print(f"OK: wrote {args.out}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    from .data import make_planted, make_synthetic, write_dataset

    if args.uniform:
        ds = make_synthetic(args.seed, args.entities, args.relations, args.positives)
    else:
        ds = make_planted(args.seed, args.entities, args.relations, args.positives, args.dim, args.test_fraction)
    write_dataset(ds, args.out)
    print(f"OK: wrote {args.out} (|E|={ds.entity_count}, |R|={ds.relation_count}, train={len(ds.train)}, test={len(ds.test)})")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    import pandas as pd

    from .data import dataset_stats, load_dataset

    ds = load_dataset(resolve_data(args.data))
    stats = dataset_stats(ds)
    print(pd.DataFrame([{"dataset": ds.name, **stats}]).to_string(index=False))
    return EXIT_OK


# -----------------------------
# Parser
# -----------------------------

def build_parser() -> UsageParser:
    ap = UsageParser(prog="nskge", description="Non-sampling knowledge graph embedding.")
    ap.add_argument("--version", action="version", version=f"nskge {__version__}")
    ap.add_argument("--threads", type=int, default=None, help="pin BLAS/OpenMP worker count")
    ap.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=True,
                    help="fixed-order reductions for bit-reproducible runs (default on)")
    ap.add_argument("--debug", action="store_true")
    ap.add_argument("--quiet", action="store_true", help="no progress bars")
    sub = ap.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train one model")
    tr.add_argument("--config", help="json5 file of flag defaults")
    tr.add_argument("--data", required=True)
    tr.add_argument("--model", choices=MODELS, default="distmult")
    tr.add_argument("--mode", choices=("ns", "sampled"), default="ns")
    tr.add_argument("--dim", type=int, default=200)
    tr.add_argument("--epochs", type=int, default=2000)
    tr.add_argument("--lr", type=float, default=1e-4)
    tr.add_argument("--lr-decay", type=float, default=0.5)
    tr.add_argument("--c-pos", type=float, default=1.0)
    tr.add_argument("--c-neg", type=float, default=None, help="default 1e-3 (ns) / 1.0 (sampled)")
    tr.add_argument("--l2", type=float, default=1e-4)
    tr.add_argument("--neg-k", type=int, default=None, help="sampled mode only (default 25)")
    tr.add_argument("--batch", type=int, default=None, help="sampled mode only (default 4000)")
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--log-every", type=int, default=50)
    tr.add_argument("--out", required=True)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="rank test triples")
    ev.add_argument("--data", required=True)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--mode", choices=("raw", "filtered", "both"), default="raw")
    ev.add_argument("--split", choices=("test", "valid"), default="test")
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_eval)

    ve = sub.add_parser("verify", help="run the oracle property suite")
    ve.add_argument("--scale", choices=("tiny", "small"), default="tiny")
    ve.add_argument("--seed", type=int, default=0)
    ve.set_defaults(func=cmd_verify)

    be = sub.add_parser("bench", help="NS vs sampled epoch timing")
    be.add_argument("--data", required=True)
    be.add_argument("--dim", type=int, default=64)
    be.add_argument("--epochs", type=int, default=10, help="timed epochs per arm")
    be.add_argument("--neg-k", type=int, default=25)
    be.add_argument("--batch", type=int, default=4000)
    be.add_argument("--seed", type=int, default=0)
    be.add_argument("--skip-kernel", action="store_true")
    be.add_argument("--out", required=True)
    be.set_defaults(func=cmd_bench)

    sy = sub.add_parser("synth", help="write a synthetic dataset in OpenKE layout")
    sy.add_argument("--out", required=True)
    sy.add_argument("--seed", type=int, default=1)
    sy.add_argument("--entities", type=int, default=50)
    sy.add_argument("--relations", type=int, default=4)
    sy.add_argument("--positives", type=int, default=200)
    sy.add_argument("--dim", type=int, default=16, help="hidden model dimension (planted)")
    sy.add_argument("--test-fraction", type=float, default=0.0)
    kind = sy.add_mutually_exclusive_group()
    kind.add_argument("--planted", dest="uniform", action="store_false", help="top triples of a hidden DistMult (default)")
    kind.add_argument("--uniform", dest="uniform", action="store_true", help="uniformly random positives")
    sy.set_defaults(func=cmd_synth, uniform=False)

    st = sub.add_parser("stats", help="dataset statistics")
    st.add_argument("--data", required=True)
    st.set_defaults(func=cmd_stats)
    ap.train_parser = tr
    return ap


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    # thread variables must be in place before anything imports numpy
    early = UsageParser(add_help=False)
    early.add_argument("--threads", type=int)
    pin_threads(early.parse_known_args(argv)[0].threads)
    if "train" in argv:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv[argv.index("train") + 1:])
        if known.config:
            from .config import load_config_file
            train_parser = ap.train_parser
            defaults = load_config_file(known.config)
            dests = {a.dest for a in train_parser._actions}
            unknown = sorted(set(defaults) - dests)
            if unknown:
                raise ConfigError(f"{known.config}: unknown keys {unknown}")
            train_parser.set_defaults(**defaults)
    return ap.parse_args(argv)


def configure_logging(debug: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if debug else logging.INFO,
        format="[%(levelname)s] %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
        pin_threads(args.threads)
    except ConfigError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_USAGE

    configure_logging(args.debug)
    from .linalg import set_deterministic
    set_deterministic(args.deterministic)
    if args.debug:
        logger.debug("nskge %s command=%s threads=%s deterministic=%s", __version__, args.command, args.threads, args.deterministic)

    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, GuardError) as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
