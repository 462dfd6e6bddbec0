"""Command-line front-end: ``mlsgnn {prepare,train,sweep,attention-stats,export-embeddings}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
divergence, 1 anything else raised by the package.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import commands
from .attention import format_statistics
from .config import PRESETS, build_config
from .errors import ConfigError, DataError, IntegrityError, MlsgError, NumericError

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4


def _seeds(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def _grid(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="mlsgnn", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=["prepare", "train", "sweep", "attention-stats",
                                       "export-embeddings"])
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--preset", choices=sorted(PRESETS), metavar="NAME",
                   help="replication preset, e.g. citeseer-20")
    p.add_argument("--seed", type=_seeds, help="seed or comma-separated seeds")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--threads", type=int, help="BLAS threads and walk workers (1 = deterministic)")
    p.add_argument("--alpha", type=float, help="override the fea/ori alignment weight")
    p.add_argument("--beta", type=float, help="override the sem/ori alignment weight")
    p.add_argument("--alpha-grid", type=_grid, help="sweep: comma-separated alpha values")
    p.add_argument("--beta-grid", type=_grid, help="sweep: comma-separated beta values")
    p.add_argument("--which", default="agg", help="export-embeddings: fea, sem, ori or agg")
    p.add_argument("--checkpoint", type=Path, help="checkpoint directory (default: per-seed)")
    return p


def _overrides(args):
    out = {}
    if args.seed is not None:
        out.setdefault("run", {})["seeds"] = args.seed
    if args.out is not None:
        out.setdefault("run", {})["out"] = args.out
    if args.threads is not None:
        out.setdefault("run", {})["threads"] = args.threads
    if args.alpha is not None:
        out.setdefault("train", {})["alpha"] = args.alpha
    if args.beta is not None:
        out.setdefault("train", {})["beta"] = args.beta
    if args.alpha_grid is not None:
        out.setdefault("sweep", {})["alpha_grid"] = args.alpha_grid
    if args.beta_grid is not None:
        out.setdefault("sweep", {})["beta_grid"] = args.beta_grid
    return out


def run(args, stdout=None):
    stdout = sys.stdout if stdout is None else stdout
    cfg = build_config(args.config, args.preset, _overrides(args))
    if cfg.threads < 1:
        raise ConfigError("--threads must be >= 1")
    workers = cfg.threads
    with threadpool_limits(limits=cfg.threads):
        if args.command == "prepare":
            prep = commands.cmd_prepare(cfg, workers=workers)
            state = "rebuilt" if prep.recomputed else "up to date"
            print(f"cache {state}: {prep.directory}", file=stdout)
        elif args.command == "train":
            rows = commands.cmd_train(cfg, workers=workers)
            for r in rows:
                print(r.line(), file=stdout)
            print(f"best\t{commands.best_run(rows).line()}", file=stdout)
            print(f"best-val\t{commands.best_val_run(rows).line()}", file=stdout)
        elif args.command == "sweep":
            alphas, betas, grid = commands.cmd_sweep(cfg, workers=workers)
            print(commands.format_sweep(alphas, betas, grid), end="", file=stdout)
        elif args.command == "attention-stats":
            mrows, crows = commands.cmd_attention_stats(cfg, checkpoint=args.checkpoint,
                                                        workers=workers)
            print(format_statistics(mrows), end="", file=stdout)
            print(format_statistics(crows), end="", file=stdout)
        else:
            path = commands.cmd_export_embeddings(cfg, args.which, checkpoint=args.checkpoint,
                                                  workers=workers)
            print(path, file=stdout)
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, IntegrityError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MlsgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
