"""Command-line entry point: ``sgil {prepare,train,evaluate,inject-noise,sweep}``.

Relative ``--out`` paths resolve under ``$SGIL_OUTPUT_ROOT`` when it is set.
Exit codes: 0 success, 2 usage or config error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .config import ConfigError, apply_ablation, dump_config, load_config
from .data import (DataError, bucket_by_sparsity, inject_noise, load_dataset, load_snapshot,
                   save_snapshot, split)
from .evaluator import evaluate, noise_sweep, sensitivity_grid, write_grid_csv, write_rows_csv
from .numerics.optim import NumericalError
from .trainer import Checkpoint, Trainer

log = logging.getLogger("sgil")

OUTPUT_ROOT_ENV = "SGIL_OUTPUT_ROOT"
EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


@dataclass
class RunManifest:
    command: str
    config_hash: str | None
    dataset_fingerprint: str | None
    version: str = __version__
    seeds: dict = field(default_factory=dict)
    started: str = ""
    finished: str = ""
    outputs: list = field(default_factory=list)

    def write(self, directory: Path) -> None:
        self.finished = _now()
        self.outputs = sorted(set(self.outputs) | {"run_manifest.json"})
        text = json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"
        (directory / "run_manifest.json").write_text(text, encoding="utf-8")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _out_dir(path: str) -> Path:
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    p.mkdir(parents=True, exist_ok=True)
    return p


def _listing(directory: Path) -> list[str]:
    return sorted(str(p.relative_to(directory)) for p in directory.rglob("*") if p.is_file())


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_range(text: str) -> tuple[int, ...]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        try:
            return tuple(range(int(lo), int(hi) + 1))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad range {text!r}") from None
    return _int_list(text)


def parse_grid(tokens: list[str]) -> tuple[tuple[int, ...], tuple[float, ...]]:
    """``["k=1..5", "beta=0,0.1"]`` -> ((1, 2, 3, 4, 5), (0.0, 0.1))."""
    env_counts, betas = (1, 2, 3, 4, 5), (0.0, 0.05, 0.10, 0.15, 0.20)
    for tok in tokens:
        key, _, value = tok.partition("=")
        if key == "k":
            env_counts = _int_range(value)
        elif key == "beta":
            betas = _float_list(value)
        else:
            raise argparse.ArgumentTypeError(f"unknown grid axis {key!r} (expected k= or beta=)")
    return env_counts, betas


# ---------------------------------------------------------------- commands

def _training_config(args):
    overrides = {}
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.k is not None:
        overrides["num_envs"] = args.k
    if args.beta is not None:
        overrides["beta"] = args.beta
    config = load_config(args.config, overrides)
    for name in args.ablation or ():
        config = apply_ablation(config, name)
    return config


def cmd_prepare(args) -> int:
    data, graph = load_dataset(args.interactions, args.social, args.rating_threshold, args.symmetrize)
    store = split(data, args.train_frac, args.val_frac, args.seed)
    out = _out_dir(args.out)
    manifest = save_snapshot(out, store, graph, seed=args.seed, train_frac=args.train_frac, val_frac=args.val_frac,
                             rating_threshold=args.rating_threshold, symmetrized=args.symmetrize)
    print(f"users={manifest['num_users']} items={manifest['num_items']} train={manifest['num_train']} "
          f"validation={manifest['num_validation']} test={manifest['num_test']} social={manifest['num_social']}")
    print(f"fingerprint {manifest['fingerprint']}")
    return 0


def cmd_inject_noise(args) -> int:
    store, graph, manifest = load_snapshot(args.dataset)
    noisy = inject_noise(graph, args.ratio, args.seed)
    out = _out_dir(args.out)
    meta = {k: v for k, v in manifest.items()
            if k not in ("files", "fingerprint", "num_users", "num_items", "num_train", "num_validation",
                         "num_test", "num_social", "split_mode")}
    result = save_snapshot(out, store, noisy, **meta, noise_ratio=args.ratio, noise_seed=args.seed,
                           source_fingerprint=manifest["fingerprint"])
    print(f"injected {len(noisy.injected)} edges; audit list in {out / result['files']['injected']}"
          if len(noisy.injected) else "injected 0 edges")
    return 0


def cmd_train(args) -> int:
    config = _training_config(args)
    store, graph, manifest = load_snapshot(args.dataset)
    out = _out_dir(args.out)
    run = RunManifest("train", config.digest(), manifest["fingerprint"], seeds={"seed": config.seed},
                      started=_now())
    (out / "config.conf").write_text(dump_config(config), encoding="utf-8")
    for stale in ("loss_log.csv", "timing.csv"):
        (out / stale).unlink(missing_ok=True)
    with threadpool_limits(limits=args.threads):
        best = Trainer(config, store, graph, log_dir=out, threads=args.threads).fit()
    print(f"best epoch {best.best_epoch}: " + " ".join(f"{k}={v:.4f}" for k, v in sorted(best.best_metrics.items())))
    run.outputs = _listing(out)
    run.write(out)
    return 0


def cmd_evaluate(args) -> int:
    checkpoint = Checkpoint.load(args.checkpoint)
    store, graph, manifest = load_snapshot(args.dataset)
    buckets = bucket_by_sparsity(store) if args.buckets else None
    with threadpool_limits(limits=args.threads):
        report = evaluate(checkpoint, store, graph, buckets, args.cutoffs, args.split, args.threads)
    out = _out_dir(args.out) if args.out else Path(args.checkpoint)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    sys.stdout.write(report.to_text())
    return 0


def cmd_sweep(args) -> int:
    config = _training_config(args)
    store, graph, manifest = load_snapshot(args.dataset)
    out = _out_dir(args.out)
    run = RunManifest("sweep", config.digest(), manifest["fingerprint"], seeds={"seed": config.seed},
                      started=_now())
    with threadpool_limits(limits=args.threads):
        if args.ratios is not None:
            rows = noise_sweep(config, store, graph, args.ratios, config.seed, args.metric)
            write_rows_csv(out / "noise_sweep.csv", rows)
        else:
            env_counts, betas = parse_grid(args.grid or [])
            grid = sensitivity_grid(config, store, graph, env_counts, betas, args.metric)
            write_grid_csv(out / "grid.csv", grid, env_counts, betas, args.metric)
    run.outputs = _listing(out)
    run.write(out)
    print(f"wrote {', '.join(p for p in run.outputs if p.endswith('.csv'))} under {out}")
    return 0


# ------------------------------------------------------------------ parser

def _add_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--dataset", required=True, help="snapshot directory written by 'prepare'")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--k", type=int, help="number of environments (config key num_envs)")
    p.add_argument("--beta", type=float, help="invariance penalty weight")
    p.add_argument("--ablation", action="append", choices=["no-env-gen", "no-invariance", "no-exploration"],
                   help="training variant; may repeat")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="any other config override; may repeat")
    p.add_argument("--threads", type=int, default=1, help="worker cap (1 guarantees determinism)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgil", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sgil {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="index raw files and split into a snapshot")
    p.add_argument("--interactions", required=True, help="user item [rating] per line")
    p.add_argument("--social", required=True, help="user user per line")
    p.add_argument("--out", required=True, help="snapshot directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--val-frac", type=float, default=0.0)
    p.add_argument("--rating-threshold", type=float, default=None, help="drop ratings below this value")
    p.add_argument("--symmetrize", action="store_true", help="add reverse social edges")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train and checkpoint a model")
    _add_training_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="full-ranking report for a checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint directory (e.g. run/best)")
    p.add_argument("--dataset", required=True, help="snapshot directory")
    p.add_argument("--cutoffs", type=_int_list, default=(10, 20), help="comma-separated N values")
    p.add_argument("--split", choices=["test", "validation"], default="test")
    p.add_argument("--buckets", action="store_true", help="add Low/Medium/High sparsity groups")
    p.add_argument("--out", help="report directory (default: the checkpoint directory)")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inject-noise", help="add fake social edges to a snapshot")
    p.add_argument("--dataset", required=True, help="snapshot directory")
    p.add_argument("--ratio", type=float, required=True, help="fake edges as a fraction of real ones")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="noised snapshot directory (includes injected.txt)")
    p.set_defaults(func=cmd_inject_noise)

    p = sub.add_parser("sweep", help="K/beta sensitivity grid or noise-ratio sweep")
    _add_training_flags(p)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--grid", nargs="+", metavar="AXIS=VALUES", help="e.g. k=1..5 beta=0,0.05,0.1")
    mode.add_argument("--ratios", type=_float_list, help="noise ratios, e.g. 0,0.5,1")
    p.add_argument("--metric", default="ndcg@20")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except (ConfigError, argparse.ArgumentTypeError) as exc:
        print(f"sgil: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"sgil: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"sgil: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
